#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "iptkit/encoder.hpp"
#include "iptkit/tensor.hpp"
#include "iptkit/tokenizer.hpp"

namespace iptkit {

/// Mean of one layer's subword rows for a sentence, excluding [CLS] and
/// [SEP]. Throws when the sentence has no content subwords.
Tensor sentence_repr(const LayerStates& states, std::size_t layer);
Tensor sentence_repr(const Model& model, const Vocab& vocab, const std::vector<std::string>& words,
                     std::size_t layer);

/// Subtracts each column's mean.
Tensor center_columns(const Tensor& x);

/// ||X2^T X1||_F^2 / (||X1^T X1||_F ||X2^T X2||_F) on column-centered
/// copies of the inputs. Throws on mismatched rows, fewer than two rows or
/// an input with zero variance.
double linear_cka(const Tensor& x1, const Tensor& x2);

/// One |S| x H matrix per layer 0..L.
std::vector<Tensor> representation_matrices(const Model& model, const Vocab& vocab,
                                            const std::vector<std::vector<std::string>>& sentences);

struct CkaReport {
  std::string sentence_set;
  std::size_t num_sentences = 0;
  std::size_t num_layers = 0;  // rows, layers 0..L
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<std::vector<double>> scores;  // scores[pair][layer]

  /// Header `layer,<a>-<b>,...`, one row per layer.
  std::string to_csv() const;
  /// {"sentence_set", "num_sentences", "scores": [{layer, a, b, score}]}.
  nlohmann::json to_json() const;
  static CkaReport from_json(const nlohmann::json& j);
};

/// Scores every layer of two models over the same sentences. The models
/// must share L and H, and their vocabularies must be equal.
CkaReport layer_report(const Model& model_a, const Vocab& vocab_a, const std::string& tag_a,
                       const Model& model_b, const Vocab& vocab_b, const std::string& tag_b,
                       const std::vector<std::vector<std::string>>& sentences,
                       const std::string& sentence_set);

}  // namespace iptkit
