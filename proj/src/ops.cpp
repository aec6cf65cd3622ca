#include "iptkit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "iptkit/error.hpp"

namespace iptkit {
namespace {

Tape& tape_of(std::initializer_list<Var> vars, const char* op) {
  Tape* t = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw Error(std::string(op) + ": invalid variable");
    if (t && v.tape() != t) throw Error(std::string(op) + ": operands on different tapes");
    t = v.tape();
  }
  return *t;
}

bool any_grad(std::initializer_list<Var> vars) {
  return std::any_of(vars.begin(), vars.end(), [](const Var& v) { return v.requires_grad(); });
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(op, "expects a matrix, got " + shape_string(t.shape()));
  }
}

void axpy(Tensor& dst, const Tensor& src, double s = 1.0) {
  double* d = dst.data();
  const double* x = src.data();
  for (std::size_t i = 0, n = dst.size(); i < n; ++i) d[i] += s * x[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = tape_of({a, b}, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul", shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  kernels::gemm_nn(av.data(), bv.data(), out.data(), m, k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), any_grad({a, b}), [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) kernels::gemm_nt(g.data(), t.value(ib).data(), t.grad(ia).data(), m, n, k);
    if (t.requires_grad(ib)) kernels::gemm_tn(t.value(ia).data(), g.data(), t.grad(ib).data(), m, k, n);
  });
}

Var add(Var a, Var b) {
  Tape& tape = tape_of({a, b}, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) {
    throw DimensionError("add", shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  Tensor out = av;
  axpy(out, bv);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), any_grad({a, b}), [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) axpy(t.grad(ia), g);
    if (t.requires_grad(ib)) axpy(t.grad(ib), g);
  });
}

Var add_row(Var a, Var b) {
  Tape& tape = tape_of({a, b}, "add_row");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "add_row");
  if (bv.size() != av.cols()) {
    throw DimensionError("add_row", shape_string(av.shape()) + " + " + shape_string(bv.shape()));
  }
  Tensor out = av;
  const std::size_t rows = av.rows(), cols = av.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) += bv[c];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), any_grad({a, b}),
                     [ia, ib, rows, cols](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad(self);
                       if (t.requires_grad(ia)) axpy(t.grad(ia), g);
                       if (t.requires_grad(ib)) {
                         Tensor& gb = t.grad(ib);
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t c = 0; c < cols; ++c) gb[c] += g(r, c);
                       }
                     });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of({a, b}, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) {
    throw DimensionError("mul", shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), any_grad({a, b}), [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      const Tensor& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      const Tensor& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var mul_scalar(Var a, double s) {
  Tape& tape = tape_of({a}, "mul_scalar");
  Tensor out = a.value();
  for (double& v : out.storage()) v *= s;
  const std::size_t ia = a.id();
  return tape.record(std::move(out), a.requires_grad(), [ia, s](Tape& t, std::size_t self) {
    axpy(t.grad(ia), t.grad(self), s);
  });
}

Var transpose(Var a) {
  Tape& tape = tape_of({a}, "transpose");
  require_matrix(a.value(), "transpose");
  Tensor out = transpose(a.value());
  const std::size_t ia = a.id();
  return tape.record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) += g(i, j);
  });
}

Var reshape(Var a, Shape shape) {
  Tape& tape = tape_of({a}, "reshape");
  Tensor out = a.value();
  out.reshape(std::move(shape));
  const std::size_t ia = a.id();
  return tape.record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    Tensor& ga = t.grad(ia);
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows", "no operands");
  Tape& tape = *parts.front().tape();
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  bool grad = false;
  for (const Var& p : parts) {
    if (p.tape() != &tape) throw Error("concat_rows: operands on different tapes");
    if (p.value().cols() != cols) throw DimensionError("concat_rows", "column count mismatch");
    rows += p.value().rows();
    grad = grad || p.requires_grad();
  }
  Tensor out({rows, cols});
  std::vector<std::size_t> ids;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    std::copy(v.storage().begin(), v.storage().end(), out.storage().begin() + offset);
    offset += v.size();
    ids.push_back(p.id());
  }
  return tape.record(std::move(out), grad, [ids](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const std::size_t n = t.value(id).size();
      if (t.requires_grad(id)) {
        Tensor& gi = t.grad(id);
        for (std::size_t i = 0; i < n; ++i) gi[i] += g[off + i];
      }
      off += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols", "no operands");
  Tape& tape = *parts.front().tape();
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  bool grad = false;
  for (const Var& p : parts) {
    if (p.tape() != &tape) throw Error("concat_cols: operands on different tapes");
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != rows) throw DimensionError("concat_cols", "row count mismatch");
    cols += p.value().cols();
    grad = grad || p.requires_grad();
  }
  Tensor out({rows, cols});
  std::vector<std::size_t> ids;
  std::size_t c0 = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, c0 + c) = v(r, c);
    c0 += v.cols();
    ids.push_back(p.id());
  }
  return tape.record(std::move(out), grad, [ids, rows](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t c0 = 0;
    for (std::size_t id : ids) {
      const std::size_t w = t.value(id).cols();
      if (t.requires_grad(id)) {
        Tensor& gi = t.grad(id);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < w; ++c) gi(r, c) += g(r, c0 + c);
      }
      c0 += w;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Tape& tape = tape_of({a}, "slice_rows");
  const Tensor& av = a.value();
  require_matrix(av, "slice_rows");
  if (begin + count > av.rows()) throw DimensionError("slice_rows", "range out of bounds");
  const std::size_t cols = av.cols();
  Tensor out({count, cols},
             std::vector<double>(av.storage().begin() + begin * cols,
                                 av.storage().begin() + (begin + count) * cols));
  const std::size_t ia = a.id();
  return tape.record(std::move(out), a.requires_grad(), [ia, begin, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * cols + i] += g[i];
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Tape& tape = tape_of({a}, "slice_cols");
  const Tensor& av = a.value();
  require_matrix(av, "slice_cols");
  if (begin + count > av.cols()) throw DimensionError("slice_cols", "range out of bounds");
  const std::size_t rows = av.rows();
  Tensor out({rows, count});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, begin + c);
  const std::size_t ia = a.id();
  return tape.record(std::move(out), a.requires_grad(),
                     [ia, begin, rows, count](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad(self);
                       Tensor& ga = t.grad(ia);
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t c = 0; c < count; ++c) ga(r, begin + c) += g(r, c);
                     });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  Tape& tape = tape_of({a}, "gather_rows");
  const Tensor& av = a.value();
  require_matrix(av, "gather_rows");
  const std::size_t cols = av.cols();
  Tensor out({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= av.rows()) throw DimensionError("gather_rows", "row index out of range");
    std::copy_n(av.data() + rows[i] * cols, cols, out.data() + i * cols);
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return tape.record(std::move(out), a.requires_grad(), [ia, idx, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < cols; ++c) ga(idx[i], c) += g(i, c);
  });
}

Tensor softmax_rows(const Tensor& a) {
  Tensor out = a;
  const std::size_t rows = a.rows(), cols = a.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& v : row) z += (v = std::exp(v - mx));
    for (double& v : row) v /= z;
  }
  (void)cols;
  return out;
}

Tensor log_softmax_rows(const Tensor& a) {
  Tensor out = a;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (double& v : row) v -= lse;
  }
  return out;
}

Var softmax_rows(Var a) {
  Tape& tape = tape_of({a}, "softmax_rows");
  Tensor out = softmax_rows(a.value());
  const std::size_t ia = a.id();
  return tape.record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += gr[c] * yr[c];
      auto out = ga.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) out[c] += yr[c] * (gr[c] - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  Tape& tape = tape_of({a}, "log_softmax_rows");
  Tensor out = log_softmax_rows(a.value());
  const std::size_t ia = a.id();
  return tape.record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double total = 0.0;
      for (double v : gr) total += v;
      auto out = ga.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) out[c] += gr[c] - std::exp(yr[c]) * total;
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& tape = tape_of({x, gamma, beta}, "layer_norm");
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gamma.value().size() != cols || beta.value().size() != cols) {
    throw DimensionError("layer_norm", "gamma/beta must have " + std::to_string(cols) + " entries");
  }
  Tensor xhat({rows, cols});
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = xv.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) xhat(r, c) = (row[c] - mean) * inv_std[r];
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = xhat(r, c) * gv[c] + bv[c];

  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return tape.record(
      std::move(out), any_grad({x, gamma, beta}),
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
       cols](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& gv = t.value(ig);
        if (t.requires_grad(ig)) {
          Tensor& gg = t.grad(ig);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gg[c] += g(r, c) * xhat(r, c);
        }
        if (t.requires_grad(ib)) {
          Tensor& gb = t.grad(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += g(r, c);
        }
        if (t.requires_grad(ix)) {
          Tensor& gx = t.grad(ix);
          const double n = static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = g(r, c) * gv[c];
              mean_d += d;
              mean_dx += d * xhat(r, c);
            }
            mean_d /= n;
            mean_dx /= n;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = g(r, c) * gv[c];
              gx(r, c) += inv_std[r] * (d - mean_d - xhat(r, c) * mean_dx);
            }
          }
        }
      });
}

Var gelu(Var a) {
  Tape& tape = tape_of({a}, "gelu");
  Tensor out = a.value();
  for (double& v : out.storage()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  const std::size_t ia = a.id();
  return tape.record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad(ia);
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      ga[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Var tanh(Var a) {
  Tape& tape = tape_of({a}, "tanh");
  Tensor out = a.value();
  for (double& v : out.storage()) v = std::tanh(v);
  const std::size_t ia = a.id();
  return tape.record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var dropout(Var a, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw Error("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return a;
  Tape& tape = tape_of({a}, "dropout");
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  std::vector<double> mask(a.value().size());
  for (double& m : mask) m = keep(rng) ? scale : 0.0;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const std::size_t ia = a.id();
  return tape.record(std::move(out), a.requires_grad(),
                     [ia, mask = std::move(mask)](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad(self);
                       Tensor& ga = t.grad(ia);
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
                     });
}

Var embedding_lookup(Var table, std::span<const int> ids) {
  Tape& tape = tape_of({table}, "embedding_lookup");
  const Tensor& tv = table.value();
  require_matrix(tv, "embedding_lookup");
  const std::size_t cols = tv.cols();
  Tensor out({ids.size(), cols});
  std::vector<std::size_t> rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      throw DimensionError("embedding_lookup", "id " + std::to_string(ids[i]) + " out of range");
    }
    rows[i] = static_cast<std::size_t>(ids[i]);
    std::copy_n(tv.data() + rows[i] * cols, cols, out.data() + i * cols);
  }
  const std::size_t it = table.id();
  return tape.record(std::move(out), table.requires_grad(),
                     [it, rows = std::move(rows), cols](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad(self);
                       Tensor& gt = t.grad(it);
                       for (std::size_t i = 0; i < rows.size(); ++i)
                         for (std::size_t c = 0; c < cols; ++c) gt(rows[i], c) += g(i, c);
                     });
}

Var mean_rows(Var a) {
  Tape& tape = tape_of({a}, "mean_rows");
  const Tensor& av = a.value();
  require_matrix(av, "mean_rows");
  const std::size_t rows = av.rows(), cols = av.cols();
  if (rows == 0) throw DimensionError("mean_rows", "no rows");
  Tensor out({1, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += av(r, c);
  for (double& v : out.storage()) v /= static_cast<double>(rows);
  const std::size_t ia = a.id();
  return tape.record(std::move(out), a.requires_grad(), [ia, rows, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) ga(r, c) += g[c] * inv;
  });
}

Var sum(Var a) {
  Tape& tape = tape_of({a}, "sum");
  double s = 0.0;
  for (double v : a.value().storage()) s += v;
  const std::size_t ia = a.id();
  return tape.record(Tensor::scalar(s), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(ia).storage()) v += g;
  });
}

Var cross_entropy(Var logits, std::span<const std::size_t> targets) {
  Tape& tape = tape_of({logits}, "cross_entropy");
  const Tensor& lv = logits.value();
  require_matrix(lv, "cross_entropy");
  const std::size_t rows = lv.rows(), cols = lv.cols();
  if (targets.size() != rows) throw DimensionError("cross_entropy", "one target per row required");
  if (rows == 0) throw DimensionError("cross_entropy", "no rows");
  Tensor logp = log_softmax_rows(lv);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= cols) {
      throw DimensionError("cross_entropy", "target " + std::to_string(targets[r]) +
                                                " out of range for " + std::to_string(cols) +
                                                " classes");
    }
    loss -= logp(r, targets[r]);
  }
  loss /= static_cast<double>(rows);
  const std::size_t il = logits.id();
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return tape.record(Tensor::scalar(loss), logits.requires_grad(),
                     [il, tgt = std::move(tgt), logp = std::move(logp)](Tape& t, std::size_t self) {
                       const double g = t.grad(self)[0] / static_cast<double>(tgt.size());
                       Tensor& gl = t.grad(il);
                       for (std::size_t r = 0; r < logp.rows(); ++r) {
                         for (std::size_t c = 0; c < logp.cols(); ++c)
                           gl(r, c) += g * std::exp(logp(r, c));
                         gl(r, tgt[r]) -= g;
                       }
                     });
}

Var pool_spans(Var x, std::span<const std::pair<std::size_t, std::size_t>> spans) {
  Tape& tape = tape_of({x}, "pool_spans");
  const Tensor& xv = x.value();
  require_matrix(xv, "pool_spans");
  const std::size_t cols = xv.cols();
  Tensor out({spans.size(), cols});
  for (std::size_t w = 0; w < spans.size(); ++w) {
    const auto [b, e] = spans[w];
    if (b >= e || e > xv.rows()) {
      throw DimensionError("pool_spans", "span [" + std::to_string(b) + "," + std::to_string(e) +
                                             ") out of range for " + std::to_string(xv.rows()) +
                                             " rows");
    }
    for (std::size_t r = b; r < e; ++r)
      for (std::size_t c = 0; c < cols; ++c) out(w, c) += xv(r, c);
    const double inv = 1.0 / static_cast<double>(e - b);
    for (std::size_t c = 0; c < cols; ++c) out(w, c) *= inv;
  }
  const std::size_t ix = x.id();
  std::vector<std::pair<std::size_t, std::size_t>> sp(spans.begin(), spans.end());
  return tape.record(std::move(out), x.requires_grad(),
                     [ix, sp = std::move(sp), cols](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad(self);
                       Tensor& gx = t.grad(ix);
                       for (std::size_t w = 0; w < sp.size(); ++w) {
                         const double inv = 1.0 / static_cast<double>(sp[w].second - sp[w].first);
                         for (std::size_t r = sp[w].first; r < sp[w].second; ++r)
                           for (std::size_t c = 0; c < cols; ++c) gx(r, c) += g(w, c) * inv;
                       }
                     });
}

namespace {

void check_biaffine(const Tensor& x, const Tensor& w, const Tensor& b, const Tensor& xh) {
  if (x.rank() != 2 || xh.rank() != 2) throw DimensionError("biaffine", "X and X' must be matrices");
  const std::size_t h = x.cols();
  if (xh.cols() != h) {
    throw DimensionError("biaffine", "X is " + shape_string(x.shape()) + " but X' is " +
                                         shape_string(xh.shape()));
  }
  if (w.rank() != 3 || w.dim(0) != h || w.dim(1) != h) {
    throw DimensionError("biaffine", "W must be H x H x R with H=" + std::to_string(h) +
                                         ", got " + shape_string(w.shape()));
  }
  if (b.size() != h * w.dim(2)) {
    throw DimensionError("biaffine", "bias must be H x R, got " + shape_string(b.shape()));
  }
}

// A[i, b*R + r] = sum_a X[i, a] W[a, b, r]
Tensor biaffine_left(const Tensor& x, const Tensor& w) {
  const std::size_t n = x.rows(), h = x.cols(), r = w.dim(2);
  Tensor a({n, h * r});
  kernels::gemm_nn(x.data(), w.data(), a.data(), n, h, h * r);
  return a;
}

Tensor biaffine_from_left(const Tensor& a, const Tensor& b, const Tensor& xh, std::size_t h,
                          std::size_t rels) {
  const std::size_t n = a.rows(), m = xh.rows();
  // head_bias[j, r] = sum_b Xh[j, b] bias[b, r]
  Tensor head_bias({m, rels});
  kernels::gemm_nn(xh.data(), b.data(), head_bias.data(), m, h, rels);
  Tensor y({n, m, rels});
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.data() + i * h * rels;
    for (std::size_t j = 0; j < m; ++j) {
      const double* hrow = xh.data() + j * h;
      double* out = y.data() + (i * m + j) * rels;
      for (std::size_t r = 0; r < rels; ++r) out[r] = head_bias(j, r);
      for (std::size_t bb = 0; bb < h; ++bb) {
        const double hv = hrow[bb];
        const double* ar = arow + bb * rels;
        for (std::size_t r = 0; r < rels; ++r) out[r] += ar[r] * hv;
      }
    }
  }
  return y;
}

}  // namespace

Tensor biaffine(const Tensor& x, const Tensor& w, const Tensor& b, const Tensor& xh) {
  check_biaffine(x, w, b, xh);
  return biaffine_from_left(biaffine_left(x, w), b, xh, x.cols(), w.dim(2));
}

Var biaffine(Var x, Var w, Var b, Var xh) {
  Tape& tape = tape_of({x, w, b, xh}, "biaffine");
  check_biaffine(x.value(), w.value(), b.value(), xh.value());
  const std::size_t h = x.value().cols(), rels = w.value().dim(2);
  Tensor left = biaffine_left(x.value(), w.value());
  Tensor y = biaffine_from_left(left, b.value(), xh.value(), h, rels);
  const std::size_t ix = x.id(), iw = w.id(), ib = b.id(), ih = xh.id();
  return tape.record(
      std::move(y), any_grad({x, w, b, xh}),
      [ix, iw, ib, ih, h, rels, left = std::move(left)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.value(ix);
        const Tensor& wv = t.value(iw);
        const Tensor& bv = t.value(ib);
        const Tensor& hv = t.value(ih);
        const std::size_t n = xv.rows(), m = hv.rows();
        // col_sum[j, r] = sum_i dY[i, j, r]
        Tensor col_sum({m, rels});
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j)
            for (std::size_t r = 0; r < rels; ++r) col_sum(j, r) += g[(i * m + j) * rels + r];
        if (t.requires_grad(ib)) {
          // d bias[b, r] = sum_j Xh[j, b] col_sum[j, r]
          kernels::gemm_tn(hv.data(), col_sum.data(), t.grad(ib).data(), m, h, rels);
        }
        if (t.requires_grad(ih)) {
          Tensor& gh = t.grad(ih);
          for (std::size_t j = 0; j < m; ++j) {
            double* out = gh.data() + j * h;
            for (std::size_t i = 0; i < n; ++i) {
              const double* gr = g.data() + (i * m + j) * rels;
              const double* ar = left.data() + i * h * rels;
              for (std::size_t bb = 0; bb < h; ++bb) {
                double s = 0.0;
                for (std::size_t r = 0; r < rels; ++r) s += gr[r] * ar[bb * rels + r];
                out[bb] += s;
              }
            }
            for (std::size_t bb = 0; bb < h; ++bb) {
              double s = 0.0;
              for (std::size_t r = 0; r < rels; ++r) s += col_sum(j, r) * bv[bb * rels + r];
              out[bb] += s;
            }
          }
        }
        if (t.requires_grad(ix) || t.requires_grad(iw)) {
          // dA[i, b*R + r] = sum_j dY[i, j, r] Xh[j, b]
          Tensor d_left({n, h * rels});
          for (std::size_t i = 0; i < n; ++i) {
            double* dl = d_left.data() + i * h * rels;
            for (std::size_t j = 0; j < m; ++j) {
              const double* gr = g.data() + (i * m + j) * rels;
              const double* hrow = hv.data() + j * h;
              for (std::size_t bb = 0; bb < h; ++bb) {
                const double hvb = hrow[bb];
                for (std::size_t r = 0; r < rels; ++r) dl[bb * rels + r] += gr[r] * hvb;
              }
            }
          }
          if (t.requires_grad(iw)) {
            kernels::gemm_tn(xv.data(), d_left.data(), t.grad(iw).data(), n, h, h * rels);
          }
          if (t.requires_grad(ix)) {
            kernels::gemm_nt(d_left.data(), wv.data(), t.grad(ix).data(), n, h * rels, h);
          }
        }
      });
}

Var select_cols(Var y, std::span<const std::size_t> cols) {
  Tape& tape = tape_of({y}, "select_cols");
  const Tensor& yv = y.value();
  if (yv.rank() != 3) throw DimensionError("select_cols", "expects an N x M x R tensor");
  const std::size_t n = yv.dim(0), m = yv.dim(1), rels = yv.dim(2);
  if (cols.size() != n) throw DimensionError("select_cols", "one column per row required");
  Tensor out({n, rels});
  for (std::size_t i = 0; i < n; ++i) {
    if (cols[i] >= m) throw DimensionError("select_cols", "column index out of range");
    for (std::size_t r = 0; r < rels; ++r) out(i, r) = yv(i, cols[i], r);
  }
  const std::size_t iy = y.id();
  std::vector<std::size_t> c(cols.begin(), cols.end());
  return tape.record(std::move(out), y.requires_grad(), [iy, c = std::move(c), m, rels](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gy = t.grad(iy);
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t r = 0; r < rels; ++r) gy[(i * m + c[i]) * rels + r] += g(i, r);
  });
}

}  // namespace iptkit
