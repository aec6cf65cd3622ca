#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "iptkit/autograd.hpp"

namespace iptkit {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moment buffers are keyed by parameter name so the
/// registry can grow (adapters, heads) between steps.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Updates every parameter that has an allocated gradient. Throws when a
  /// gradient holds NaN or infinity, leaving parameters untouched.
  void step(ParamStore& params, const Gradients& grads);

  std::uint64_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };

  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments, std::less<>> moments_;
};

}  // namespace iptkit
