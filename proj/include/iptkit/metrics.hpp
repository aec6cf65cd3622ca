#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

#include "iptkit/tensor.hpp"
#include "iptkit/treebank.hpp"

namespace iptkit {

/// Percentages are rounded to one decimal; the counts are exact.
struct ParseEval {
  double uas = 0.0;
  double las = 0.0;
  double tree_rate = 0.0;
  std::size_t n_sentences = 0;
  std::size_t n_tokens = 0;
  std::size_t head_correct = 0;
  std::size_t labeled_correct = 0;

  nlohmann::json to_json() const;
};

/// Every token counts, punctuation included. Throws on misaligned corpora.
ParseEval uas_las(const std::vector<Sentence>& pred, const std::vector<Sentence>& gold);

/// Percent of equal entries. Throws on length mismatch or empty input.
double accuracy(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gold);

/// Argmax (lowest index on ties) of each logit row against its target.
double mlm_accuracy(const Tensor& logits, const std::vector<std::size_t>& targets);

/// Row-wise argmax, lowest index on ties.
std::vector<std::size_t> argmax_rows(const Tensor& m);

double round1(double percent);

}  // namespace iptkit
