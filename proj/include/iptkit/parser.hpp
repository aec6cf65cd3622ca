#pragma once

#include <cstddef>
#include <vector>

#include "iptkit/encoder.hpp"
#include "iptkit/ops.hpp"

namespace iptkit {

// Checkpoint names of the biaffine parameters.
inline constexpr const char* kArcWeight = "parse/W_arc";  // H x H
inline constexpr const char* kArcBias = "parse/b_arc";    // H
inline constexpr const char* kRelWeight = "parse/W_rel";  // H x H x R
inline constexpr const char* kRelBias = "parse/b_rel";    // H x R

/// Registers the biaffine head on `model` with `num_relations` output
/// classes. Weights are Xavier-uniform, biases zero.
void attach_parser(Model& model, std::size_t num_relations, Rng& rng);
std::size_t parser_relations(const Model& model);

/// Arc scores Y_arc (N x (N+1)) from dependents X (N x H) and head
/// candidates X' ((N+1) x H):
///   Y_arc[i, j] = x_i W_arc x'_j^T + b_arc . x'_j
/// Column 0 scores the root.
Tensor score_arcs(const Tensor& x, const Tensor& x_heads, const Tensor& w_arc, const Tensor& b_arc);
Var score_arcs(Var x, Var x_heads, Var w_arc, Var b_arc);

/// Relation scores Y_rel (N x (N+1) x R):
///   Y_rel[i, j, r] = x_i W_rel[:, :, r] x'_j^T + b_rel[:, r] . x'_j
Tensor score_rels(const Tensor& x, const Tensor& x_heads, const Tensor& w_rel, const Tensor& b_rel);
Var score_rels(Var x, Var x_heads, Var w_rel, Var b_rel);

/// Arc cross-entropy over the N+1 head candidates plus relation
/// cross-entropy read at the gold head column, each averaged over
/// dependents. Throws DimensionError on out-of-range gold indices.
Var parsing_loss(Var arc_scores, Var rel_scores, const std::vector<std::size_t>& gold_heads,
                 const std::vector<std::size_t>& gold_rels);
double parsing_loss(const Tensor& arc_scores, const Tensor& rel_scores,
                    const std::vector<std::size_t>& gold_heads,
                    const std::vector<std::size_t>& gold_rels);

struct ParseScores {
  Tensor arc;  // N x (N+1)
  Tensor rel;  // N x (N+1) x R
};

struct ParseVars {
  Var arc;
  Var rel;
};

/// Full parser forward: encode, dropout on the final layer, subword
/// pooling, CLS prepended as the root, biaffine scoring.
ParseVars parser_forward(ForwardPass& pass, const Encoding& encoding);
/// Inference-mode scores.
ParseScores score_sentence(const Model& model, const Encoding& encoding);

}  // namespace iptkit
