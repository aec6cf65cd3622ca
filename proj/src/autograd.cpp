#include "iptkit/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "iptkit/error.hpp"

namespace iptkit {

std::size_t ParamStore::add(std::string name, Tensor value) {
  if (index_.count(name)) throw Error("duplicate parameter name: " + name);
  const std::size_t id = params_.size();
  index_.emplace(name, id);
  params_.push_back({std::move(name), std::move(value)});
  return id;
}

std::optional<std::size_t> ParamStore::find(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParamStore::index(std::string_view name) const {
  auto id = find(name);
  if (!id) throw Error("unknown parameter: " + std::string(name));
  return *id;
}

bool ParamStore::has_prefix(std::string_view prefix) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Parameter& p) { return p.name.starts_with(prefix); });
}

void ParamStore::remove_prefix(std::string_view prefix) {
  std::erase_if(params_, [&](const Parameter& p) { return p.name.starts_with(prefix); });
  reindex();
}

std::size_t ParamStore::count_values(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.name.starts_with(prefix)) n += p.value.size();
  return n;
}

void ParamStore::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < params_.size(); ++i) index_.emplace(params_[i].name, i);
}

std::string_view param_group(std::string_view name) {
  return name.substr(0, name.find('/'));
}

Gradients::Gradients(const ParamStore& store) : store_(&store), grads_(store.size()) {}

Tensor& Gradients::at(std::size_t i) {
  if (grads_[i].empty()) grads_[i] = Tensor((*store_)[i].value.shape());
  return grads_[i];
}

void Gradients::zero() {
  for (auto& g : grads_) g.fill(0.0);
}

void Gradients::scale(double factor) {
  for (auto& g : grads_)
    for (double& v : g.storage()) v *= factor;
}

bool Gradients::all_finite() const {
  for (const auto& g : grads_)
    for (double v : g.storage())
      if (!std::isfinite(v)) return false;
  return true;
}

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::constant_ref(const Tensor& value) {
  Node n;
  n.external = &value;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  n.leaf = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::param(const Tensor& value, Tensor& grad_sink) {
  if (!grad_sink.same_shape(value)) throw DimensionError("Tape::param", "grad sink shape");
  Node n;
  n.external = &value;
  n.grad_external = &grad_sink;
  n.requires_grad = true;
  n.leaf = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, bool requires_grad, Backward backward) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad_external) return *n.grad_external;
  if (n.grad_owned.empty()) n.grad_owned = Tensor(value(id).shape());
  return n.grad_owned;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw Error("backward: variable belongs to another tape");
  if (value(loss.id()).size() != 1) {
    throw Error("backward: loss must be a scalar, got shape " +
                shape_string(value(loss.id()).shape()));
  }
  if (!nodes_[loss.id()].requires_grad) return;
  for (auto& n : nodes_)
    if (!n.leaf) n.grad_owned = Tensor();
  grad(loss.id())[0] += 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.leaf || !n.requires_grad || !n.backward) continue;
    if (n.grad_owned.empty()) continue;
    n.backward(*this, id);
  }
}

}  // namespace iptkit
