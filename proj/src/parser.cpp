#include "iptkit/parser.hpp"

#include <cmath>

#include "iptkit/error.hpp"

namespace iptkit {
namespace {

void check_gold(std::size_t n, std::size_t candidates, std::size_t rels,
                const std::vector<std::size_t>& heads, const std::vector<std::size_t>& labels) {
  if (heads.size() != n || labels.size() != n) {
    throw DimensionError("parsing_loss", "expected " + std::to_string(n) + " gold heads and labels");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (heads[i] >= candidates) {
      throw DimensionError("parsing_loss", "gold head " + std::to_string(heads[i]) +
                                               " out of range [0," + std::to_string(candidates - 1) +
                                               "]");
    }
    if (labels[i] >= rels) {
      throw DimensionError("parsing_loss", "gold relation " + std::to_string(labels[i]) +
                                               " out of range for R=" + std::to_string(rels));
    }
  }
}

}  // namespace

void attach_parser(Model& model, std::size_t num_relations, Rng& rng) {
  if (num_relations == 0) throw ConfigError("parser needs at least one relation");
  if (model.params().has_prefix("parse/")) throw Error("parser head already attached");
  const std::size_t h = model.config().hidden;
  ParamStore& p = model.params();
  p.add(kArcWeight, init_param({h, h}, InitScheme::xavier_uniform, rng));
  p.add(kArcBias, Tensor({h}));
  p.add(kRelWeight, init_param({h, h, num_relations}, InitScheme::xavier_uniform, rng));
  p.add(kRelBias, Tensor({h, num_relations}));
}

std::size_t parser_relations(const Model& model) {
  return model.params().value(kRelWeight).dim(2);
}

Tensor score_arcs(const Tensor& x, const Tensor& x_heads, const Tensor& w_arc, const Tensor& b_arc) {
  if (w_arc.rank() != 2 || b_arc.size() != w_arc.dim(0)) {
    throw DimensionError("score_arcs", "W_arc must be H x H and b_arc length H");
  }
  Tensor w = w_arc;
  w.reshape({w_arc.dim(0), w_arc.dim(1), 1});
  Tensor y = biaffine(x, w, b_arc, x_heads);
  y.reshape({x.rows(), x_heads.rows()});
  return y;
}

Var score_arcs(Var x, Var x_heads, Var w_arc, Var b_arc) {
  const Tensor& w = w_arc.value();
  if (w.rank() != 2 || b_arc.value().size() != w.dim(0)) {
    throw DimensionError("score_arcs", "W_arc must be H x H and b_arc length H");
  }
  Var y = biaffine(x, reshape(w_arc, {w.dim(0), w.dim(1), 1}), b_arc, x_heads);
  return reshape(y, {x.value().rows(), x_heads.value().rows()});
}

Tensor score_rels(const Tensor& x, const Tensor& x_heads, const Tensor& w_rel, const Tensor& b_rel) {
  return biaffine(x, w_rel, b_rel, x_heads);
}

Var score_rels(Var x, Var x_heads, Var w_rel, Var b_rel) {
  return biaffine(x, w_rel, b_rel, x_heads);
}

Var parsing_loss(Var arc_scores, Var rel_scores, const std::vector<std::size_t>& gold_heads,
                 const std::vector<std::size_t>& gold_rels) {
  const Tensor& arc = arc_scores.value();
  const Tensor& rel = rel_scores.value();
  if (arc.rank() != 2 || rel.rank() != 3 || rel.dim(0) != arc.dim(0) || rel.dim(1) != arc.dim(1)) {
    throw DimensionError("parsing_loss", "scores must be N x (N+1) and N x (N+1) x R");
  }
  check_gold(arc.dim(0), arc.dim(1), rel.dim(2), gold_heads, gold_rels);
  Var arc_loss = cross_entropy(arc_scores, gold_heads);
  Var rel_loss = cross_entropy(select_cols(rel_scores, gold_heads), gold_rels);
  return add(arc_loss, rel_loss);
}

double parsing_loss(const Tensor& arc_scores, const Tensor& rel_scores,
                    const std::vector<std::size_t>& gold_heads,
                    const std::vector<std::size_t>& gold_rels) {
  Tape tape;
  return parsing_loss(tape.constant_ref(arc_scores), tape.constant_ref(rel_scores), gold_heads,
                      gold_rels)
      .value()[0];
}

ParseVars parser_forward(ForwardPass& pass, const Encoding& encoding) {
  std::vector<Var> states = encode(pass, encoding.ids);
  Var top = head_dropout(pass, states.back());
  Var words = pool_words(top, encoding.alignment);
  Var heads = parser_inputs(top, words);
  ParseVars out;
  out.arc = score_arcs(words, heads, pass.param(kArcWeight), pass.param(kArcBias));
  out.rel = score_rels(words, heads, pass.param(kRelWeight), pass.param(kRelBias));
  return out;
}

ParseScores score_sentence(const Model& model, const Encoding& encoding) {
  Tape tape;
  ForwardPass pass(tape, model, nullptr, TrainScope::all, Mode::eval, nullptr);
  ParseVars v = parser_forward(pass, encoding);
  return {v.arc.value(), v.rel.value()};
}

}  // namespace iptkit
