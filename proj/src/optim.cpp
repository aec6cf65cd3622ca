#include "iptkit/optim.hpp"

#include <cmath>

#include "iptkit/error.hpp"

namespace iptkit {

void Adam::step(ParamStore& params, const Gradients& grads) {
  if (grads.size() != params.size()) throw Error("adam: gradients do not match parameters");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads.has(i)) continue;
    for (double g : grads.get(i).storage()) {
      if (!std::isfinite(g)) throw Error("adam: non-finite gradient for " + params[i].name);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads.has(i)) continue;
    Parameter& p = params[i];
    const Tensor& g = grads.get(i);
    auto [it, fresh] = moments_.try_emplace(p.name);
    Moments& mom = it->second;
    if (fresh || !mom.m.same_shape(p.value)) {
      mom.m = Tensor(p.value.shape());
      mom.v = Tensor(p.value.shape());
    }
    double* w = p.value.data();
    double* m = mom.m.data();
    double* v = mom.v.data();
    const double* gd = g.data();
    for (std::size_t k = 0, n = g.size(); k < n; ++k) {
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * gd[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * gd[k] * gd[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace iptkit
