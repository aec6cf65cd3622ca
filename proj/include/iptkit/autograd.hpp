#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iptkit/tensor.hpp"

namespace iptkit {

struct Parameter {
  std::string name;
  Tensor value;

  friend bool operator==(const Parameter&, const Parameter&) = default;
};

/// Ordered, named parameter registry. Names are hierarchical with `/`
/// separators; the first component is the group (`base`, `adapter`,
/// `parse`, `mlm`, `seqc`, `mcc`).
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor value);
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index(std::string_view name) const;

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  Tensor& value(std::string_view name) { return params_[index(name)].value; }
  const Tensor& value(std::string_view name) const { return params_[index(name)].value; }

  std::size_t size() const noexcept { return params_.size(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  bool has_prefix(std::string_view prefix) const;
  /// Drops every parameter whose name starts with `prefix`.
  void remove_prefix(std::string_view prefix);
  /// Total number of scalar values under `prefix` (all when empty).
  std::size_t count_values(std::string_view prefix = {}) const;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  void reindex();

  std::vector<Parameter> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

std::string_view param_group(std::string_view name);

/// Gradient buffers aligned with a ParamStore. Buffers are allocated on
/// first use so frozen parameters never cost memory.
class Gradients {
 public:
  explicit Gradients(const ParamStore& store);

  Tensor& at(std::size_t i);
  bool has(std::size_t i) const { return i < grads_.size() && !grads_[i].empty(); }
  const Tensor& get(std::size_t i) const { return grads_.at(i); }
  std::size_t size() const noexcept { return grads_.size(); }

  void zero();
  void scale(double factor);
  bool all_finite() const;

 private:
  const ParamStore* store_;
  std::vector<Tensor> grads_;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  bool requires_grad() const;
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recording. Nodes are appended in evaluation order, so the
/// node list is already topologically sorted; backward walks it in reverse.
class Tape {
 public:
  // Propagates the gradient of node `self` into its inputs.
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Records `value` by reference. It must outlive the tape.
  Var constant_ref(const Tensor& value);
  /// Differentiable leaf owning its value and gradient.
  Var leaf(Tensor value);
  /// Differentiable leaf bound to an external value and gradient sink.
  /// Gradients accumulate into `grad_sink` across backward calls.
  Var param(const Tensor& value, Tensor& grad_sink);

  Var record(Tensor value, bool requires_grad, Backward backward);

  const Tensor& value(std::size_t id) const;
  const Tensor& value(Var v) const { return value(v.id()); }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, allocated as zeros on first access.
  Tensor& grad(std::size_t id);
  const Tensor& grad(Var v) { return grad(v.id()); }

  /// Seeds d loss / d loss = 1 and propagates. Leaf and parameter
  /// gradients accumulate across calls; intermediate ones are reset.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad_owned;
    Tensor* grad_external = nullptr;
    bool requires_grad = false;
    bool leaf = false;
    Backward backward;
  };

  std::deque<Node> nodes_;  // stable references across appends
};

}  // namespace iptkit
