#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "iptkit/encoder.hpp"
#include "iptkit/tokenizer.hpp"

namespace iptkit {

// ---- sequence classification -------------------------------------------

/// seqc/W (H x C), seqc/b (C).
void attach_seqc(Model& model, std::size_t num_classes, Rng& rng);
std::size_t seqc_classes(const Model& model);

/// Logits x_CLS W_sc + b_sc, shape 1 x C.
Var seqc_logits(ForwardPass& pass, Var x_cls);
/// softmax(x_CLS W_sc + b_sc) for a single 1 x H (or H) vector.
std::vector<double> seqc_forward(const Tensor& x_cls, const Tensor& w_sc, const Tensor& b_sc);

// ---- multiple choice ----------------------------------------------------

/// mcc/W_h (H x H), mcc/b_h (H), mcc/W_o (1 x H). No parameter depends on
/// the number of answers.
void attach_mcc(Model& model, Rng& rng);

/// Per-answer scalar W_o tanh(W_h x + b_h) for each answer's CLS vector,
/// concatenated into a 1 x K logit row.
Var mcc_logits(ForwardPass& pass, const std::vector<Var>& x_cls);
std::vector<double> mcc_forward(const std::vector<Tensor>& x_cls, const Tensor& w_h,
                                const Tensor& b_h, const Tensor& w_o);

// ---- masked language modelling ----------------------------------------

struct MlmBatch {
  std::vector<int> input_ids;           // masked positions replaced by [MASK]
  std::vector<std::size_t> positions;   // ascending
  std::vector<std::size_t> targets;     // original ids at `positions`
};

/// Masks max(1, round(rate * maskable)) non-special positions, sampled
/// without replacement; every selected position becomes [MASK].
MlmBatch mlm_mask(const std::vector<int>& ids, double rate, Rng& rng);

/// mlm/W (H x V), mlm/b (V).
void attach_mlm(Model& model, Rng& rng);

/// Logits for the final-layer states at the masked positions, M x V.
Var mlm_logits(ForwardPass& pass, Var final_states, const std::vector<std::size_t>& positions);
/// Mean cross-entropy at the masked positions.
Var mlm_loss(ForwardPass& pass, Var final_states, const MlmBatch& batch);

// ---- paired inputs ------------------------------------------------------

struct PairEncoding {
  std::vector<int> ids;       // [CLS] a [SEP] b [SEP]
  std::vector<int> segments;  // 0 through the first [SEP], 1 afterwards
};

/// Overlong pairs lose pieces from the right of `b` first, then from the
/// right of `a`. [CLS] and both [SEP] tokens are always kept.
PairEncoding pair_encode(const std::vector<std::string>& a, const std::vector<std::string>& b,
                         const Vocab& vocab, std::size_t max_len);

/// Whitespace tokenization for free-text task fields.
std::vector<std::string> split_words(const std::string& text);

}  // namespace iptkit
