#include "iptkit/encoder.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "iptkit/error.hpp"

namespace iptkit {
namespace {

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l) + "/"; }

Var linear(ForwardPass& pass, Var x, const std::string& w, const std::string& b) {
  return add_row(matmul(x, pass.param(w)), pass.param(b));
}

Var adapter_block(ForwardPass& pass, Var x, const std::string& prefix) {
  Var h = gelu(linear(pass, x, prefix + "down_w", prefix + "down_b"));
  return add(x, linear(pass, h, prefix + "up_w", prefix + "up_b"));
}

Var attention(ForwardPass& pass, Var x, const std::string& p) {
  const EncoderConfig& cfg = pass.model().config();
  const std::size_t h = cfg.hidden, d = h / cfg.heads;
  Var qkv = linear(pass, x, p + "qkv_w", p + "qkv_b");
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Var> outs;
  outs.reserve(cfg.heads);
  for (std::size_t k = 0; k < cfg.heads; ++k) {
    Var q = slice_cols(qkv, k * d, d);
    Var key = slice_cols(qkv, h + k * d, d);
    Var v = slice_cols(qkv, 2 * h + k * d, d);
    Var probs = softmax_rows(mul_scalar(matmul(q, transpose(key)), scale));
    outs.push_back(matmul(probs, v));
  }
  return linear(pass, concat_cols(outs), p + "out_w", p + "out_b");
}

}  // namespace

void EncoderConfig::validate() const {
  if (layers == 0) throw ConfigError("encoder: layers must be >= 1");
  if (hidden == 0 || heads == 0 || hidden % heads != 0) {
    throw ConfigError("encoder: hidden must be a positive multiple of heads");
  }
  if (ffn == 0 || max_len < 2) throw ConfigError("encoder: ffn must be > 0 and max_len >= 2");
  if (vocab_size < static_cast<std::size_t>(kMinVocabSize)) {
    throw ConfigError("encoder: vocab_size must be at least " + std::to_string(kMinVocabSize));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("encoder: dropout must be in [0, 1)");
}

std::string EncoderConfig::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "layers = " << layers << '\n'
      << "hidden = " << hidden << '\n'
      << "heads = " << heads << '\n'
      << "ffn = " << ffn << '\n'
      << "max_len = " << max_len << '\n'
      << "vocab_size = " << vocab_size << '\n'
      << "dropout = " << dropout << '\n';
  return out.str();
}

EncoderConfig EncoderConfig::from_text(std::string_view text) {
  EncoderConfig c;
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("encoder config: expected key = value", line_no);
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto take_size = [&](const char* key, std::size_t& dst) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    try {
      std::size_t pos = 0;
      dst = std::stoul(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw ConfigError(std::string("encoder config: bad value for ") + key);
    }
    kv.erase(it);
  };
  take_size("layers", c.layers);
  take_size("hidden", c.hidden);
  take_size("heads", c.heads);
  take_size("ffn", c.ffn);
  take_size("max_len", c.max_len);
  take_size("vocab_size", c.vocab_size);
  if (auto it = kv.find("dropout"); it != kv.end()) {
    try {
      c.dropout = std::stod(it->second);
    } catch (const std::exception&) {
      throw ConfigError("encoder config: bad value for dropout");
    }
    kv.erase(it);
  }
  if (!kv.empty()) throw ConfigError("encoder config: unknown key '" + kv.begin()->first + "'");
  c.validate();
  return c;
}

Model::Model(EncoderConfig config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t h = config_.hidden, f = config_.ffn;
  auto xavier = [&](Shape s) { return init_param(s, InitScheme::xavier_uniform, rng); };
  params_.add("base/emb/tok", init_param({config_.vocab_size, h}, InitScheme::normal, rng, 0.02));
  params_.add("base/emb/pos", init_param({config_.max_len, h}, InitScheme::normal, rng, 0.02));
  params_.add("base/emb/seg", init_param({2, h}, InitScheme::normal, rng, 0.02));
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "base/" + layer_prefix(l);
    params_.add(p + "attn/ln_g", Tensor({h}, 1.0));
    params_.add(p + "attn/ln_b", Tensor({h}));
    params_.add(p + "attn/qkv_w", xavier({h, 3 * h}));
    params_.add(p + "attn/qkv_b", Tensor({3 * h}));
    params_.add(p + "attn/out_w", xavier({h, h}));
    params_.add(p + "attn/out_b", Tensor({h}));
    params_.add(p + "ffn/ln_g", Tensor({h}, 1.0));
    params_.add(p + "ffn/ln_b", Tensor({h}));
    params_.add(p + "ffn/in_w", xavier({h, f}));
    params_.add(p + "ffn/in_b", Tensor({f}));
    params_.add(p + "ffn/out_w", xavier({f, h}));
    params_.add(p + "ffn/out_b", Tensor({h}));
  }
  params_.add("base/final_ln_g", Tensor({h}, 1.0));
  params_.add("base/final_ln_b", Tensor({h}));
}

Model::Model(EncoderConfig config, std::optional<AdapterConfig> adapters, ParamStore params)
    : config_(config), adapters_(adapters), params_(std::move(params)) {
  config_.validate();
  if (!params_.find("base/emb/tok")) throw Error("model: parameter registry lacks base/emb/tok");
  if (params_.value("base/emb/tok").dim(1) != config_.hidden ||
      params_.value("base/emb/tok").dim(0) != config_.vocab_size) {
    throw Error("model: embedding table does not match the encoder config");
  }
  if (adapters_.has_value() != params_.has_prefix("adapter/")) {
    throw Error("model: adapter config and adapter parameters disagree");
  }
}

void Model::inject_adapters(AdapterConfig config, Rng& rng) {
  if (adapters_ || params_.has_prefix("adapter/")) throw Error("adapters already injected");
  if (config.size == 0 || config.size >= config_.hidden) {
    throw ConfigError("adapter size must be in [1, hidden)");
  }
  const std::size_t h = config_.hidden, s = config.size;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    for (const char* sub : {"attn/", "ffn/"}) {
      const std::string p = "adapter/" + layer_prefix(l) + sub;
      params_.add(p + "down_w", init_param({h, s}, InitScheme::xavier_uniform, rng));
      params_.add(p + "down_b", Tensor({s}));
      params_.add(p + "up_w", Tensor({s, h}));
      params_.add(p + "up_b", Tensor({h}));
    }
  }
  adapters_ = config;
}

void Model::drop_heads() {
  ParamStore kept;
  for (const auto& p : params_) {
    const auto group = param_group(p.name);
    if (group == "base" || group == "adapter") kept.add(p.name, p.value);
  }
  params_ = std::move(kept);
}

ForwardPass::ForwardPass(Tape& tape, const Model& model, Gradients* grads, TrainScope scope,
                         Mode mode, Rng* rng)
    : tape_(tape), model_(model), grads_(grads), scope_(scope), mode_(mode), rng_(rng) {
  if (mode_ == Mode::train && model_.config().dropout > 0.0 && rng_ == nullptr) {
    throw Error("forward pass: training with dropout requires an rng");
  }
}

Var ForwardPass::param(std::string_view name) {
  const std::size_t id = model_.params().index(name);
  const Tensor& value = model_.params()[id].value;
  const bool trainable =
      grads_ != nullptr && (scope_ == TrainScope::all || param_group(name) != "base");
  if (!trainable) return tape_.constant_ref(value);
  return tape_.param(value, grads_->at(id));
}

Rng& ForwardPass::rng() {
  if (!rng_) throw Error("forward pass: no rng bound");
  return *rng_;
}

std::vector<Var> encode(ForwardPass& pass, std::span<const int> ids, std::span<const int> segments) {
  const EncoderConfig& cfg = pass.model().config();
  const std::size_t t = ids.size();
  if (t == 0) throw Error("encode: empty sequence");
  if (t > cfg.max_len) {
    throw Error("encode: sequence of " + std::to_string(t) + " exceeds max_len " +
                std::to_string(cfg.max_len));
  }
  if (!segments.empty() && segments.size() != t) throw Error("encode: segment ids length mismatch");
  std::vector<int> positions(t);
  for (std::size_t i = 0; i < t; ++i) positions[i] = static_cast<int>(i);
  std::vector<int> seg(t, 0);
  if (!segments.empty()) seg.assign(segments.begin(), segments.end());

  Var x = add(add(embedding_lookup(pass.param("base/emb/tok"), ids),
                  embedding_lookup(pass.param("base/emb/pos"), positions)),
              embedding_lookup(pass.param("base/emb/seg"), seg));
  x = head_dropout(pass, x);

  const bool adapters = pass.model().adapters().has_value();
  std::vector<Var> states{x};
  states.reserve(cfg.layers + 1);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "base/" + layer_prefix(l);
    const std::string a = "adapter/" + layer_prefix(l);

    Var attn_in = layer_norm(x, pass.param(p + "attn/ln_g"), pass.param(p + "attn/ln_b"));
    Var attn_out = attention(pass, attn_in, p + "attn/");
    attn_out = head_dropout(pass, attn_out);
    if (adapters) attn_out = adapter_block(pass, attn_out, a + "attn/");
    x = add(x, attn_out);

    Var ffn_in = layer_norm(x, pass.param(p + "ffn/ln_g"), pass.param(p + "ffn/ln_b"));
    Var ffn_out = linear(pass, gelu(linear(pass, ffn_in, p + "ffn/in_w", p + "ffn/in_b")),
                         p + "ffn/out_w", p + "ffn/out_b");
    ffn_out = head_dropout(pass, ffn_out);
    if (adapters) ffn_out = adapter_block(pass, ffn_out, a + "ffn/");
    x = add(x, ffn_out);

    if (l + 1 == cfg.layers) {
      x = layer_norm(x, pass.param("base/final_ln_g"), pass.param("base/final_ln_b"));
    }
    states.push_back(x);
  }
  return states;
}

LayerStates encode_eval(const Model& model, std::span<const int> ids, std::span<const int> segments) {
  Tape tape;
  ForwardPass pass(tape, model, nullptr, TrainScope::all, Mode::eval, nullptr);
  std::vector<Var> vars = encode(pass, ids, segments);
  LayerStates out;
  out.reserve(vars.size());
  for (const Var& v : vars) out.push_back(v.value());
  return out;
}

Var pool_words(Var layer_state, const Alignment& alignment) {
  return pool_spans(layer_state, alignment.spans);
}

Tensor pool_words(const Tensor& layer_state, const Alignment& alignment) {
  Tape tape;
  return pool_words(tape.constant_ref(layer_state), alignment).value();
}

Var parser_inputs(Var layer_state, Var words) {
  const Var parts[] = {slice_rows(layer_state, 0, 1), words};
  return concat_rows(parts);
}

Tensor parser_inputs(const Tensor& layer_state, const Tensor& words) {
  Tape tape;
  return parser_inputs(tape.constant_ref(layer_state), tape.constant_ref(words)).value();
}

Var head_dropout(ForwardPass& pass, Var x) {
  if (!pass.training() || pass.dropout_p() == 0.0) return x;
  return dropout(x, pass.dropout_p(), pass.rng(), true);
}

}  // namespace iptkit
