#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mmict/tensor.hpp"

namespace mmict {

// A named tensor that may receive gradients. Frozen parameters
// (trainable == false) never get a gradient and are never updated.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
  std::optional<Tensor> grad;

  void zero_grad() { grad.reset(); }
};

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the
// tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using GradList = std::vector<std::pair<Parameter*, Tensor>>;

// Ordered record of executed differentiable operations. Reverse replay
// visits every node once; each backward function adds exactly one
// contribution to each of its inputs that requires a gradient.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  // With track_gradients == false every value is a constant (inference).
  explicit Tape(bool track_gradients) : track_(track_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // One leaf per Parameter per tape; repeated calls return the same Var.
  Var param(Parameter& p);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(const Var& v) const { return nodes_[v.id_].value; }
  bool requires_grad(const Var& v) const { return nodes_[v.id_].requires_grad; }
  // Gradient buffer of v, allocated as zeros on first access.
  Tensor& grad(const Var& v);

  // Reverse replay from a scalar loss. Returns the gradient of every
  // trainable Parameter reached, in order of first use on this tape.
  GradList gradients(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::optional<Tensor> grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> leaves_;
  std::vector<std::size_t> param_order_;
  bool track_ = true;
};

// Populates Parameter::grad (accumulating) for every trainable parameter
// reachable from the scalar loss.
void backward(const Var& loss);
// Adds weight * g into each parameter's gradient.
void accumulate_gradients(const GradList& grads, double weight = 1.0);

// Differentiable operations. Inputs are never modified.
Var matmul(const Var& a, const Var& b);
Var linear(const Var& x, const Var& weight, const Var& bias);
Var add(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& bias);
Var scale(const Var& a, double s);
Var mul(const Var& a, const Var& b);
Var sum(const Var& a);
Var softmax(const Var& x, std::size_t axis);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var gelu(const Var& x);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
Var embedding(const Var& table, std::span<const int> ids);
// Multi-head scaled dot-product attention: q[n,d] attends over k,v[m,d].
// With causal, query i sees keys j <= i + (m - n).
Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads, bool causal);
// Mean over unmasked positions of -log softmax(logits)[t, target_t].
Var cross_entropy(const Var& logits, std::span<const int> targets, const std::vector<bool>& mask);

// Forward-only attention on plain tensors (shared by inference paths).
Tensor attention_forward(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, bool causal,
                         std::vector<Tensor>* probs = nullptr);

}  // namespace mmict
