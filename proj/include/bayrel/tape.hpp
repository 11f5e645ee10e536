#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bayrel/tensor.hpp"

namespace bayrel {

// Named trainable tensor. Tape::backward accumulates into grad; callers
// zero it between steps.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v);
  void zero_grad();
};

// Handle into a Tape. Only valid for the tape that produced it.
struct Var {
  int id = -1;
};

// Reverse-mode tape. Operations append nodes in topological order
// (inputs always precede outputs); backward() walks the record once in
// reverse. Single-threaded per tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  // Leaf bound to a Parameter; backward() adds the leaf gradient into
  // p.grad. Interning the same Parameter twice accumulates both paths.
  Var param(Parameter& p);
  Var constant(double v);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;

  Var matmul(Var a, Var b);
  Var transpose(Var a);

  // Elementwise; shapes must match or one operand's shape must be a
  // trailing suffix of the other's (bias-style broadcast).
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);

  Var negate(Var a);
  Var exp(Var a);
  Var log(Var a);  // domain error on non-positive input
  Var sigmoid(Var a);
  Var relu(Var a);
  Var softplus(Var a);
  Var powc(Var a, double c);
  Var clamp(Var a, double lo, double hi);  // zero gradient outside (lo, hi)
  Var scale(Var a, double c);
  Var shift(Var a, double c);

  // out(i,j) = m(i,j) * v(i) for m [N x M], v [N].
  Var mul_rows(Var m, Var v);

  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_rows(Var a, std::size_t begin, std::size_t count);

  Var sum(Var a);                            // scalar
  Var sum_axis(Var a, std::size_t axis);     // axis removed
  Var mean(Var a);
  Var mean_axis(Var a, std::size_t axis);

  // loss must be a single-element tensor. Populates gradients for every
  // requires_grad node and accumulates Parameter leaves into their
  // Parameter::grad. May be called once per tape.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* sink = nullptr;
    std::function<void(Tape&)> backprop;
  };

  std::vector<Node> nodes_;
  bool ran_backward_ = false;

  Var push(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop);
  const Node& at(Var v) const;
  Node& at(Var v);
  bool needs_grad(Var v) const { return at(v).requires_grad; }
  Tensor& grad_ref(Var v);

  Var unary(Var a, Tensor out, std::function<double(double x, double y)> dfdx);
  Var binary_ew(Var a, Var b, int op);
  Var reduce_all(Var a, bool take_mean);
  Var reduce_axis(Var a, std::size_t axis, bool take_mean);
  Var concat2d(const std::vector<Var>& parts, std::size_t axis);
};

}  // namespace bayrel
