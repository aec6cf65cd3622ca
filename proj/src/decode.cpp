#include "iptkit/decode.hpp"

#include <algorithm>
#include <limits>

#include "iptkit/error.hpp"
#include "iptkit/treebank.hpp"

namespace iptkit {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using Matrix = std::vector<std::vector<double>>;  // weight[head][dependent]

void check_scores(const Tensor& arc, const char* op) {
  if (arc.rank() != 2 || arc.dim(1) != arc.dim(0) + 1) {
    throw DimensionError(op, "expected N x (N+1) arc scores, got " + shape_string(arc.shape()));
  }
}

// Chu-Liu/Edmonds on a dense graph whose node 0 is the root. Returns the
// parent of each node (parent[0] = -1).
std::vector<int> chu_liu_edmonds(const Matrix& w) {
  const int n = static_cast<int>(w.size());
  std::vector<int> parent(n, -1);
  for (int v = 1; v < n; ++v) {
    double best = kNegInf;
    for (int u = 0; u < n; ++u) {
      if (u != v && w[u][v] > best) {
        best = w[u][v];
        parent[v] = u;
      }
    }
  }

  // Look for a cycle among the greedy choices.
  std::vector<int> color(n, 0);
  std::vector<int> cycle;
  for (int s = 1; s < n && cycle.empty(); ++s) {
    std::vector<int> path;
    int v = s;
    while (v > 0 && color[v] == 0) {
      color[v] = s;
      path.push_back(v);
      v = parent[v];
    }
    if (v > 0 && color[v] == s) {
      int u = v;
      do {
        cycle.push_back(u);
        u = parent[u];
      } while (u != v);
    }
    for (int p : path)
      if (color[p] == s) color[p] = -1;
  }
  if (cycle.empty()) return parent;

  std::vector<bool> in_cycle(n, false);
  for (int c : cycle) in_cycle[c] = true;

  // Contracted graph: surviving nodes keep their relative order, the cycle
  // becomes the last node.
  std::vector<int> new_id(n, -1), old_id;
  for (int v = 0; v < n; ++v) {
    if (!in_cycle[v]) {
      new_id[v] = static_cast<int>(old_id.size());
      old_id.push_back(v);
    }
  }
  const int c = static_cast<int>(old_id.size());
  const int m = c + 1;
  Matrix cw(m, std::vector<double>(m, kNegInf));
  std::vector<int> enter(n, -1);  // for outside u: cycle node its best arc enters
  std::vector<int> leave(n, -1);  // for outside v: cycle node its best arc leaves from
  for (int u = 0; u < n; ++u) {
    if (in_cycle[u]) continue;
    for (int v = 0; v < n; ++v) {
      if (in_cycle[v] || u == v) continue;
      cw[new_id[u]][new_id[v]] = w[u][v];
    }
    double best = kNegInf;
    for (int v : cycle) {
      const double s = w[u][v] - w[parent[v]][v];
      if (s > best || (s == best && enter[u] >= 0 && v < enter[u])) {
        best = s;
        enter[u] = v;
      }
    }
    cw[new_id[u]][c] = best;
  }
  for (int v = 1; v < n; ++v) {
    if (in_cycle[v]) continue;
    double best = kNegInf;
    for (int u : cycle) {
      if (w[u][v] > best || (w[u][v] == best && leave[v] >= 0 && u < leave[v])) {
        best = w[u][v];
        leave[v] = u;
      }
    }
    cw[c][new_id[v]] = best;
  }

  const std::vector<int> sub = chu_liu_edmonds(cw);
  for (int v = 1; v < n; ++v) {
    if (in_cycle[v]) continue;
    const int p = sub[new_id[v]];
    parent[v] = p == c ? leave[v] : old_id[p];
  }
  const int entering_from = old_id[sub[c]];
  parent[enter[entering_from]] = entering_from;
  return parent;
}

Matrix to_weights(const Tensor& arc) {
  const std::size_t n = arc.dim(0);
  Matrix w(n + 1, std::vector<double>(n + 1, kNegInf));
  for (std::size_t d = 0; d < n; ++d)
    for (std::size_t h = 0; h <= n; ++h)
      if (h != d + 1) w[h][d + 1] = arc(d, h);
  return w;
}

std::vector<int> heads_from_parents(const std::vector<int>& parent) {
  return {parent.begin() + 1, parent.end()};
}

}  // namespace

double tree_score(const Tensor& arc_scores, const std::vector<int>& heads) {
  double s = 0.0;
  for (std::size_t i = 0; i < heads.size(); ++i) s += arc_scores(i, static_cast<std::size_t>(heads[i]));
  return s;
}

PredictedTree greedy_decode(const Tensor& arc_scores) {
  check_scores(arc_scores, "greedy_decode");
  const std::size_t n = arc_scores.dim(0);
  PredictedTree t;
  t.heads.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = kNegInf;
    int arg = 0;
    for (std::size_t j = 0; j <= n; ++j) {
      if (j == i + 1) continue;
      if (arc_scores(i, j) > best) {
        best = arc_scores(i, j);
        arg = static_cast<int>(j);
      }
    }
    t.heads[i] = arg;
  }
  t.is_tree = validate_heads(t.heads).ok();
  return t;
}

PredictedTree mst_decode(const Tensor& arc_scores) {
  check_scores(arc_scores, "mst_decode");
  const std::size_t n = arc_scores.dim(0);
  PredictedTree t;
  if (n == 0) {
    t.is_tree = true;
    return t;
  }
  Matrix w = to_weights(arc_scores);
  std::vector<int> heads = heads_from_parents(chu_liu_edmonds(w));
  if (std::count(heads.begin(), heads.end(), 0) > 1) {
    // Re-solve with a single permitted root child and keep the best.
    double best_score = kNegInf;
    std::vector<int> best;
    for (std::size_t r = 1; r <= n; ++r) {
      Matrix wr = w;
      for (std::size_t v = 1; v <= n; ++v)
        if (v != r) wr[0][v] = kNegInf;
      std::vector<int> cand = heads_from_parents(chu_liu_edmonds(wr));
      const double s = tree_score(arc_scores, cand);
      if (s > best_score || (s == best_score && cand < best)) {
        best_score = s;
        best = std::move(cand);
      }
    }
    heads = std::move(best);
  }
  t.heads = std::move(heads);
  t.is_tree = validate_heads(t.heads).ok();
  return t;
}

PredictedTree brute_force_mst(const Tensor& arc_scores) {
  check_scores(arc_scores, "brute_force_mst");
  const std::size_t n = arc_scores.dim(0);
  if (n > 8) throw Error("brute_force_mst: N=" + std::to_string(n) + " exceeds the limit of 8");
  std::vector<int> heads(n, 0), best;
  double best_score = kNegInf;
  // Odometer over [0, N]^N in lexicographic order.
  while (true) {
    bool self_loop = false;
    for (std::size_t i = 0; i < n; ++i) self_loop = self_loop || heads[i] == static_cast<int>(i + 1);
    if (!self_loop && validate_heads(heads).ok()) {
      const double s = tree_score(arc_scores, heads);
      if (s > best_score) {
        best_score = s;
        best = heads;
      }
    }
    std::size_t k = n;
    while (k > 0 && heads[k - 1] == static_cast<int>(n)) heads[--k] = 0;
    if (k == 0) break;
    ++heads[k - 1];
  }
  PredictedTree t;
  t.heads = std::move(best);
  t.is_tree = true;
  return t;
}

std::vector<std::size_t> assign_labels(const Tensor& rel_scores, const std::vector<int>& heads) {
  if (rel_scores.rank() != 3 || rel_scores.dim(0) != heads.size()) {
    throw DimensionError("assign_labels", "expected N x (N+1) x R relation scores");
  }
  const std::size_t rels = rel_scores.dim(2);
  std::vector<std::size_t> out(heads.size(), 0);
  for (std::size_t i = 0; i < heads.size(); ++i) {
    if (heads[i] < 0 || static_cast<std::size_t>(heads[i]) >= rel_scores.dim(1)) {
      throw DimensionError("assign_labels", "head index out of range");
    }
    double best = kNegInf;
    for (std::size_t r = 0; r < rels; ++r) {
      const double s = rel_scores(i, static_cast<std::size_t>(heads[i]), r);
      if (s > best) {
        best = s;
        out[i] = r;
      }
    }
  }
  return out;
}

}  // namespace iptkit
