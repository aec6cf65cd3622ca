#include "iptkit/heads.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "iptkit/error.hpp"
#include "iptkit/ops.hpp"

namespace iptkit {

void attach_seqc(Model& model, std::size_t num_classes, Rng& rng) {
  if (num_classes < 2) throw ConfigError("seqc needs at least two classes");
  if (model.params().has_prefix("seqc/")) throw Error("seqc head already attached");
  const std::size_t h = model.config().hidden;
  model.params().add("seqc/W", init_param({h, num_classes}, InitScheme::xavier_uniform, rng));
  model.params().add("seqc/b", Tensor({num_classes}));
}

std::size_t seqc_classes(const Model& model) { return model.params().value("seqc/b").size(); }

Var seqc_logits(ForwardPass& pass, Var x_cls) {
  return add_row(matmul(x_cls, pass.param("seqc/W")), pass.param("seqc/b"));
}

std::vector<double> seqc_forward(const Tensor& x_cls, const Tensor& w_sc, const Tensor& b_sc) {
  Tensor x = x_cls;
  x.reshape({1, x_cls.size()});
  Tensor logits = matmul(x, w_sc);
  if (b_sc.size() != logits.size()) throw DimensionError("seqc_forward", "bias width");
  for (std::size_t c = 0; c < logits.size(); ++c) logits[c] += b_sc[c];
  return softmax_rows(logits).storage();
}

void attach_mcc(Model& model, Rng& rng) {
  if (model.params().has_prefix("mcc/")) throw Error("mcc head already attached");
  const std::size_t h = model.config().hidden;
  model.params().add("mcc/W_h", init_param({h, h}, InitScheme::xavier_uniform, rng));
  model.params().add("mcc/b_h", Tensor({h}));
  model.params().add("mcc/W_o", init_param({1, h}, InitScheme::xavier_uniform, rng));
}

Var mcc_logits(ForwardPass& pass, const std::vector<Var>& x_cls) {
  if (x_cls.size() < 2) throw Error("mcc needs at least two answers");
  Var w_h_t = transpose(pass.param("mcc/W_h"));
  Var b_h = pass.param("mcc/b_h");
  Var w_o_t = transpose(pass.param("mcc/W_o"));
  std::vector<Var> scores;
  scores.reserve(x_cls.size());
  for (const Var& x : x_cls) {
    scores.push_back(matmul(tanh(add_row(matmul(x, w_h_t), b_h)), w_o_t));
  }
  return concat_cols(scores);
}

std::vector<double> mcc_forward(const std::vector<Tensor>& x_cls, const Tensor& w_h,
                                const Tensor& b_h, const Tensor& w_o) {
  if (x_cls.size() < 2) throw Error("mcc needs at least two answers");
  const std::size_t h = w_h.dim(0);
  Tensor logits({1, x_cls.size()});
  for (std::size_t k = 0; k < x_cls.size(); ++k) {
    if (x_cls[k].size() != h) throw DimensionError("mcc_forward", "answer vector width");
    double y = 0.0;
    for (std::size_t r = 0; r < h; ++r) {
      double z = b_h[r];
      for (std::size_t c = 0; c < h; ++c) z += w_h(r, c) * x_cls[k][c];
      y += w_o[r] * std::tanh(z);
    }
    logits[k] = y;
  }
  return softmax_rows(logits).storage();
}

MlmBatch mlm_mask(const std::vector<int>& ids, double rate, Rng& rng) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("mlm mask rate must be in (0, 1]");
  std::vector<std::size_t> maskable;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] >= kNumSpecials) maskable.push_back(i);
  if (maskable.empty()) throw Error("mlm_mask: no maskable positions");
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(rate * static_cast<double>(maskable.size()))));
  // Partial Fisher-Yates: the first k entries become a uniform sample.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, maskable.size() - 1);
    std::swap(maskable[i], maskable[pick(rng)]);
  }
  MlmBatch batch;
  batch.input_ids = ids;
  batch.positions.assign(maskable.begin(), maskable.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(batch.positions.begin(), batch.positions.end());
  for (std::size_t p : batch.positions) {
    batch.targets.push_back(static_cast<std::size_t>(ids[p]));
    batch.input_ids[p] = kMask;
  }
  return batch;
}

void attach_mlm(Model& model, Rng& rng) {
  if (model.params().has_prefix("mlm/")) throw Error("mlm head already attached");
  const std::size_t h = model.config().hidden, v = model.config().vocab_size;
  model.params().add("mlm/W", init_param({h, v}, InitScheme::xavier_uniform, rng));
  model.params().add("mlm/b", Tensor({v}));
}

Var mlm_logits(ForwardPass& pass, Var final_states, const std::vector<std::size_t>& positions) {
  Var picked = gather_rows(final_states, positions);
  return add_row(matmul(picked, pass.param("mlm/W")), pass.param("mlm/b"));
}

Var mlm_loss(ForwardPass& pass, Var final_states, const MlmBatch& batch) {
  return cross_entropy(mlm_logits(pass, final_states, batch.positions), batch.targets);
}

PairEncoding pair_encode(const std::vector<std::string>& a, const std::vector<std::string>& b,
                         const Vocab& vocab, std::size_t max_len) {
  if (max_len < 3) throw ConfigError("pair_encode: max_len must be at least 3");
  std::vector<int> pa, pb;
  for (const auto& w : a)
    for (int id : vocab.encode_word(w)) pa.push_back(id);
  for (const auto& w : b)
    for (int id : vocab.encode_word(w)) pb.push_back(id);
  const std::size_t budget = max_len - 3;
  if (pa.size() + pb.size() > budget) {
    const std::size_t keep_b = pa.size() >= budget ? 0 : budget - pa.size();
    pb.resize(std::min(pb.size(), keep_b));
    pa.resize(std::min(pa.size(), budget));
  }
  PairEncoding enc;
  enc.ids.push_back(kCls);
  enc.ids.insert(enc.ids.end(), pa.begin(), pa.end());
  enc.ids.push_back(kSep);
  enc.segments.assign(enc.ids.size(), 0);
  enc.ids.insert(enc.ids.end(), pb.begin(), pb.end());
  enc.ids.push_back(kSep);
  enc.segments.resize(enc.ids.size(), 1);
  return enc;
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(std::move(w));
  return out;
}

}  // namespace iptkit
