#include "iptkit/metrics.hpp"

#include <cmath>
#include <string>

#include "iptkit/error.hpp"

namespace iptkit {

double round1(double percent) { return std::round(percent * 10.0) / 10.0; }

nlohmann::json ParseEval::to_json() const {
  return {{"uas", uas},
          {"las", las},
          {"tree_rate", tree_rate},
          {"n_sentences", n_sentences},
          {"n_tokens", n_tokens}};
}

ParseEval uas_las(const std::vector<Sentence>& pred, const std::vector<Sentence>& gold) {
  if (pred.size() != gold.size()) {
    throw Error("uas_las: " + std::to_string(pred.size()) + " predicted vs " +
                std::to_string(gold.size()) + " gold sentences");
  }
  ParseEval ev;
  std::size_t trees = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const auto& p = pred[s].tokens;
    const auto& g = gold[s].tokens;
    if (p.size() != g.size()) {
      throw Error("uas_las: sentence " + std::to_string(s + 1) + " has " +
                  std::to_string(p.size()) + " predicted vs " + std::to_string(g.size()) +
                  " gold tokens");
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (p[i].head != g[i].head) continue;
      ++ev.head_correct;
      if (p[i].deprel == g[i].deprel) ++ev.labeled_correct;
    }
    ev.n_tokens += g.size();
    if (validate_tree(pred[s]).ok()) ++trees;
  }
  ev.n_sentences = gold.size();
  if (ev.n_tokens > 0) {
    ev.uas = round1(100.0 * static_cast<double>(ev.head_correct) / static_cast<double>(ev.n_tokens));
    ev.las =
        round1(100.0 * static_cast<double>(ev.labeled_correct) / static_cast<double>(ev.n_tokens));
  }
  if (ev.n_sentences > 0) {
    ev.tree_rate = round1(100.0 * static_cast<double>(trees) / static_cast<double>(ev.n_sentences));
  }
  return ev;
}

double accuracy(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gold) {
  if (pred.size() != gold.size()) throw Error("accuracy: length mismatch");
  if (gold.empty()) throw Error("accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hit += pred[i] == gold[i];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(gold.size());
}

std::vector<std::size_t> argmax_rows(const Tensor& m) {
  if (m.rank() != 2) throw DimensionError("argmax_rows", "expected a matrix");
  std::vector<std::size_t> out(m.rows(), 0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 1; c < m.cols(); ++c)
      if (m(r, c) > m(r, out[r])) out[r] = c;
  return out;
}

double mlm_accuracy(const Tensor& logits, const std::vector<std::size_t>& targets) {
  if (targets.empty()) throw Error("mlm_accuracy: no masked positions");
  if (logits.rank() != 2 || logits.rows() != targets.size()) {
    throw DimensionError("mlm_accuracy", "one logit row per target expected");
  }
  return accuracy(argmax_rows(logits), targets);
}

}  // namespace iptkit
