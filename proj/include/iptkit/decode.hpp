#pragma once

#include <cstddef>
#include <vector>

#include "iptkit/tensor.hpp"

namespace iptkit {

/// heads[i] is the head of word i+1 (0 = root); rels[i] indexes the label
/// inventory. is_tree reports whether heads form a single-root arborescence.
struct PredictedTree {
  std::vector<int> heads;
  std::vector<std::size_t> rels;
  bool is_tree = false;
};

/// Row-wise argmax over Y_arc (N x (N+1)) with self-attachment masked out.
/// Ties resolve to the smallest head index. The result need not be a tree.
PredictedTree greedy_decode(const Tensor& arc_scores);

/// Maximum spanning arborescence rooted at 0 with exactly one root child,
/// via Chu-Liu/Edmonds. Ties resolve towards smaller head indices.
PredictedTree mst_decode(const Tensor& arc_scores);

/// Exhaustive search over all head vectors; same objective and tie-break
/// as mst_decode (lexicographically smallest head vector among optima).
/// Throws for N > 8.
PredictedTree brute_force_mst(const Tensor& arc_scores);

/// rels[i] = argmax_r Y_rel[i, heads[i], r].
std::vector<std::size_t> assign_labels(const Tensor& rel_scores, const std::vector<int>& heads);

/// Sum of Y_arc[i, heads[i]].
double tree_score(const Tensor& arc_scores, const std::vector<int>& heads);

}  // namespace iptkit
