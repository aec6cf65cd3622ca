#include "iptkit/cka.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "iptkit/error.hpp"

namespace iptkit {
namespace {

// Frobenius norm squared of A^T B for row-major A (n x p), B (n x q).
double cross_norm2(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
  std::vector<double> g(p * q, 0.0);
  kernels::gemm_tn(a.data(), b.data(), g.data(), n, p, q);
  double s = 0.0;
  for (double v : g) s += v * v;
  return s;
}

}  // namespace

Tensor sentence_repr(const LayerStates& states, std::size_t layer) {
  if (layer >= states.size()) {
    throw Error("sentence_repr: layer " + std::to_string(layer) + " outside [0, " +
                std::to_string(states.size() - 1) + "]");
  }
  const Tensor& s = states[layer];
  if (s.rows() < 3) throw Error("sentence_repr: sentence has no content subwords");
  Tensor out({s.cols()});
  for (std::size_t r = 1; r + 1 < s.rows(); ++r)
    for (std::size_t c = 0; c < s.cols(); ++c) out[c] += s(r, c);
  const double inv = 1.0 / static_cast<double>(s.rows() - 2);
  for (std::size_t c = 0; c < s.cols(); ++c) out[c] *= inv;
  return out;
}

Tensor sentence_repr(const Model& model, const Vocab& vocab, const std::vector<std::string>& words,
                     std::size_t layer) {
  Encoding enc = encode_words(words, vocab);
  return sentence_repr(encode_eval(model, enc.ids), layer);
}

Tensor center_columns(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("center_columns", "expected a matrix");
  Tensor out = x;
  const std::size_t n = x.rows(), h = x.cols();
  if (n == 0) return out;
  std::vector<double> mean(h, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < h; ++c) mean[c] += x(r, c);
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < h; ++c) out(r, c) -= mean[c];
  return out;
}

double linear_cka(const Tensor& x1, const Tensor& x2) {
  if (x1.rank() != 2 || x2.rank() != 2 || x1.rows() != x2.rows()) {
    throw DimensionError("linear_cka", shape_string(x1.shape()) + " vs " + shape_string(x2.shape()));
  }
  if (x1.rows() < 2) throw Error("linear_cka: need at least two rows");
  const Tensor a = center_columns(x1);
  const Tensor b = center_columns(x2);
  const double aa = cross_norm2(a, a);
  const double bb = cross_norm2(b, b);
  if (aa == 0.0 || bb == 0.0) throw Error("linear_cka: zero-variance input");
  const double ab = cross_norm2(b, a);
  // Rounding can push the ratio a few ulps past 1.
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), 0.0, 1.0);
}

std::vector<Tensor> representation_matrices(const Model& model, const Vocab& vocab,
                                            const std::vector<std::vector<std::string>>& sentences) {
  const std::size_t layers = model.config().layers + 1, h = model.config().hidden;
  std::vector<Tensor> out(layers, Tensor({sentences.size(), h}));
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    Encoding enc = encode_words(sentences[s], vocab);
    LayerStates states = encode_eval(model, enc.ids);
    for (std::size_t l = 0; l < layers; ++l) {
      Tensor v = sentence_repr(states, l);
      std::copy(v.data(), v.data() + h, out[l].data() + s * h);
    }
  }
  return out;
}

CkaReport layer_report(const Model& model_a, const Vocab& vocab_a, const std::string& tag_a,
                       const Model& model_b, const Vocab& vocab_b, const std::string& tag_b,
                       const std::vector<std::vector<std::string>>& sentences,
                       const std::string& sentence_set) {
  if (!(vocab_a == vocab_b)) throw Error("layer_report: models use different tokenizers");
  if (model_a.config().layers != model_b.config().layers ||
      model_a.config().hidden != model_b.config().hidden) {
    throw Error("layer_report: models differ in depth or width");
  }
  const auto ra = representation_matrices(model_a, vocab_a, sentences);
  const auto rb = representation_matrices(model_b, vocab_b, sentences);
  CkaReport rep;
  rep.sentence_set = sentence_set;
  rep.num_sentences = sentences.size();
  rep.num_layers = ra.size();
  rep.pairs.emplace_back(tag_a, tag_b);
  rep.scores.emplace_back();
  for (std::size_t l = 0; l < ra.size(); ++l) rep.scores[0].push_back(linear_cka(ra[l], rb[l]));
  return rep;
}

std::string CkaReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "layer";
  for (const auto& [a, b] : pairs) out << ',' << a << '-' << b;
  out << '\n';
  for (std::size_t l = 0; l < num_layers; ++l) {
    out << l;
    for (const auto& col : scores) out << ',' << col.at(l);
    out << '\n';
  }
  return out.str();
}

nlohmann::json CkaReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t p = 0; p < pairs.size(); ++p)
    for (std::size_t l = 0; l < num_layers; ++l)
      rows.push_back({{"layer", l}, {"a", pairs[p].first}, {"b", pairs[p].second},
                      {"score", scores[p].at(l)}});
  return {{"sentence_set", sentence_set},
          {"num_sentences", num_sentences},
          {"num_layers", num_layers},
          {"scores", rows}};
}

CkaReport CkaReport::from_json(const nlohmann::json& j) {
  CkaReport rep;
  rep.sentence_set = j.at("sentence_set").get<std::string>();
  rep.num_sentences = j.at("num_sentences").get<std::size_t>();
  rep.num_layers = j.at("num_layers").get<std::size_t>();
  for (const auto& row : j.at("scores")) {
    std::pair<std::string, std::string> key{row.at("a").get<std::string>(),
                                            row.at("b").get<std::string>()};
    auto it = std::find(rep.pairs.begin(), rep.pairs.end(), key);
    std::size_t p = static_cast<std::size_t>(it - rep.pairs.begin());
    if (it == rep.pairs.end()) {
      rep.pairs.push_back(key);
      rep.scores.emplace_back(rep.num_layers, 0.0);
    }
    const auto layer = row.at("layer").get<std::size_t>();
    if (layer >= rep.num_layers) throw ParseError("cka report: layer index out of range");
    rep.scores[p][layer] = row.at("score").get<double>();
  }
  return rep;
}

}  // namespace iptkit
