#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iptkit/autograd.hpp"
#include "iptkit/ops.hpp"
#include "iptkit/tokenizer.hpp"

namespace iptkit {

struct EncoderConfig {
  std::size_t layers = 4;
  std::size_t hidden = 128;
  std::size_t heads = 4;
  std::size_t ffn = 512;
  std::size_t max_len = 128;
  std::size_t vocab_size = 8000;
  double dropout = 0.1;

  void validate() const;
  /// `key = value` lines, one per field, in a fixed order.
  std::string to_text() const;
  static EncoderConfig from_text(std::string_view text);

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct AdapterConfig {
  std::size_t size = 64;  // bottleneck width; activation is GELU

  friend bool operator==(const AdapterConfig&, const AdapterConfig&) = default;
};

enum class Mode { train, eval };

/// Which parameter groups receive gradients during a pass.
enum class TrainScope {
  all,         // every parameter
  non_base,    // adapters and task heads; `base/*` stays frozen
};

/// Transformer encoder plus any task heads attached to its registry.
/// Parameter names: `base/...` for the encoder, `adapter/...` for
/// bottleneck adapters, and `<head>/...` for task heads.
class Model {
 public:
  Model(EncoderConfig config, Rng& rng);
  Model(EncoderConfig config, std::optional<AdapterConfig> adapters, ParamStore params);

  const EncoderConfig& config() const noexcept { return config_; }
  const std::optional<AdapterConfig>& adapters() const noexcept { return adapters_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  /// Adds two residual bottleneck adapters per layer, after the attention
  /// and feed-forward sublayers. Up-projections start at zero so the
  /// encoder's function is unchanged. Throws if adapters already exist.
  void inject_adapters(AdapterConfig config, Rng& rng);

  /// Drops all parameters outside `base/` and `adapter/`.
  void drop_heads();

 private:
  EncoderConfig config_;
  std::optional<AdapterConfig> adapters_;
  ParamStore params_;
};

/// Binds a model's parameters onto a tape for one forward/backward pass.
class ForwardPass {
 public:
  /// `grads` may be null for inference; then every parameter is a constant.
  ForwardPass(Tape& tape, const Model& model, Gradients* grads, TrainScope scope, Mode mode,
              Rng* rng);

  Var param(std::string_view name);
  Tape& tape() noexcept { return tape_; }
  const Model& model() const noexcept { return model_; }
  bool training() const noexcept { return mode_ == Mode::train; }
  Rng& rng();
  double dropout_p() const noexcept { return model_.config().dropout; }

 private:
  Tape& tape_;
  const Model& model_;
  Gradients* grads_;
  TrainScope scope_;
  Mode mode_;
  Rng* rng_;
};

/// Layer 0 is the embedding output, layer L the final (normalized) layer.
/// Every entry is T x H.
std::vector<Var> encode(ForwardPass& pass, std::span<const int> ids,
                        std::span<const int> segments = {});

using LayerStates = std::vector<Tensor>;
/// Deterministic inference pass.
LayerStates encode_eval(const Model& model, std::span<const int> ids,
                        std::span<const int> segments = {});

/// Word vectors as means over each word's subword rows, N x H.
Var pool_words(Var layer_state, const Alignment& alignment);
Tensor pool_words(const Tensor& layer_state, const Alignment& alignment);

/// Head-candidate matrix [x_CLS; X], (N+1) x H. Row 0 of the state is CLS.
Var parser_inputs(Var layer_state, Var words);
Tensor parser_inputs(const Tensor& layer_state, const Tensor& words);

/// Dropout applied to encoder outputs before a task head.
Var head_dropout(ForwardPass& pass, Var x);

}  // namespace iptkit
