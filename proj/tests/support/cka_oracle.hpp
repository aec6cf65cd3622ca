// Reference CKA through centered Gram matrices, and random orthogonal
// matrices from a QR factorization.
#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "iptkit/tensor.hpp"

namespace cka_oracle {

inline Eigen::MatrixXd to_eigen(const iptkit::Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t(r, c);
  return m;
}

inline iptkit::Tensor from_eigen(const Eigen::MatrixXd& m) {
  iptkit::Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t(r, c) = m(r, c);
  return t;
}

// <HKH, HLH>_F / (||HKH||_F ||HLH||_F) with K = X1 X1^T, L = X2 X2^T,
// accumulated with explicit loops.
inline double gram_cka(const iptkit::Tensor& x1, const iptkit::Tensor& x2) {
  const Eigen::Index n = static_cast<Eigen::Index>(x1.rows());
  const Eigen::MatrixXd a = to_eigen(x1), b = to_eigen(x2);
  Eigen::MatrixXd k(n, n), l(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double s = 0.0, t = 0.0;
      for (Eigen::Index c = 0; c < a.cols(); ++c) s += a(i, c) * a(j, c);
      for (Eigen::Index c = 0; c < b.cols(); ++c) t += b(i, c) * b(j, c);
      k(i, j) = s;
      l(i, j) = t;
    }
  }
  const Eigen::MatrixXd h =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  const Eigen::MatrixXd kc = h * k * h, lc = h * l * h;
  double kl = 0.0, kk = 0.0, ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      kl += kc(i, j) * lc(i, j);
      kk += kc(i, j) * kc(i, j);
      ll += lc(i, j) * lc(i, j);
    }
  }
  return kl / (std::sqrt(kk) * std::sqrt(ll));
}

inline iptkit::Tensor random_orthogonal(std::size_t h, iptkit::Rng& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd g(h, h);
  for (Eigen::Index r = 0; r < g.rows(); ++r)
    for (Eigen::Index c = 0; c < g.cols(); ++c) g(r, c) = nd(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return from_eigen(qr.householderQ() * Eigen::MatrixXd::Identity(h, h));
}

inline iptkit::Tensor randn(std::size_t rows, std::size_t cols, iptkit::Rng& rng, double shift = 0.0) {
  iptkit::Tensor t({rows, cols});
  std::normal_distribution<double> nd(shift, 1.0);
  for (double& v : t.storage()) v = nd(rng);
  return t;
}

}  // namespace cka_oracle
