#pragma once

#include <functional>
#include <string>
#include <vector>

#include "miaa/params.hpp"
#include "miaa/tensor.hpp"

namespace miaa::num {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
class Var {
 public:
  Var() = default;
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  const Tensor& value() const;

 private:
  friend class Tape;
  friend Var make_op(Tape* t, Tensor value, std::function<void(Tape&, int)> back);
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape over Tensors. Single-threaded; one tape per forward
// pass. Every op checks result finiteness so NaN/Inf cannot propagate
// silently into payments.
class Tape {
 public:
  Var leaf(Tensor value);
  // Leaf backed by a named parameter; backward() accumulates into the
  // store's gradient for that name. Repeated calls reuse the same node.
  Var param(ParameterStore& store, const std::string& name);

  // Runs backpropagation from a scalar loss and flushes gradients into
  // every bound ParameterStore (creation order, hence deterministic).
  void backward(const Var& loss);

  std::size_t node_count() const { return nodes_.size(); }
  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

 private:
  friend class Var;
  friend Var make_op(Tape* t, Tensor value, std::function<void(Tape&, int)> back);

  struct Node {
    Tensor value;
    std::function<void(Tape&, int)> back;  // null for leaves
  };
  struct Binding {
    ParameterStore* store;
    std::string name;
    int node;
  };

  Tensor& grad(int id);
  bool has_grad(int id) const { return !grads_[static_cast<std::size_t>(id)].data.empty(); }

  std::vector<Node> nodes_;
  std::vector<Binding> bindings_;
  std::vector<Tensor> grads_;

 public:
  // Used internally by op builders; exposed for backward closures.
  Tensor& grad_ref(int id) { return grad(id); }
  bool grad_present(int id) const { return has_grad(id); }
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

// ---- op set -----------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, std::vector<std::int64_t> shape);
Var concat1d(const std::vector<Var>& parts);
Var stack_rows(const std::vector<Var>& rows);
Var embed_row(const Var& table, std::int64_t row);  // 1-D gather of one row

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_const(const Var& a, double c);
Var sub_from_const(double c, const Var& a);       // c - a
Var mul_const_t(const Var& a, const Tensor& c);   // elementwise by constant tensor
Var add_const_t(const Var& a, const Tensor& c);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var log_op(const Var& a);
Var clamp(const Var& a, double lo, double hi);

Var sum(const Var& a);                       // scalar
Var index1d(const Var& v, std::int64_t i);   // scalar element of a vector
Var softmax1d(const Var& x, double temperature);
Var softmax_rows(const Var& x);              // row-wise, temperature 1
Var add_rowvec(const Var& mat, const Var& vec);

// softmax(Q Kᵀ / sqrt(d)) V with Q,K,V of shape m×d.
Var attention(const Var& q, const Var& k, const Var& v);

// Plain (non-tape) softmax with temperature; shares the stable kernel.
std::vector<double> softmax_values(const std::vector<double>& x, double temperature);

}  // namespace miaa::num
