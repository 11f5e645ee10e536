#include "bayrel/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace bayrel {

namespace {

double sigmoid_stable(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_stable(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// True when `small` equals the trailing dimensions of `big`.
bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  const std::size_t off = big.size() - small.size();
  for (std::size_t i = 0; i < small.size(); ++i)
    if (small[i] != big[off + i]) return false;
  return true;
}

}  // namespace

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {
  value.requires_grad = true;
}

void Parameter::zero_grad() {
  for (double& g : grad.data) g = 0.0;
}

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::at(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw std::logic_error("tape: invalid var id " + std::to_string(v.id));
  return nodes_[static_cast<std::size_t>(v.id)];
}

Tape::Node& Tape::at(Var v) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->at(v));
}

Tensor& Tape::grad_ref(Var v) { return at(v).grad; }

Var Tape::leaf(Tensor value, bool requires_grad) {
  const bool rg = requires_grad || value.requires_grad;
  return push(std::move(value), rg, nullptr);
}

Var Tape::param(Parameter& p) {
  Var v = push(p.value, true, nullptr);
  at(v).sink = &p;
  return v;
}

Var Tape::constant(double v) { return leaf(Tensor::scalar(v), false); }

const Tensor& Tape::value(Var v) const { return at(v).value; }

const Tensor& Tape::grad(Var v) const {
  if (!ran_backward_) throw std::logic_error("tape: grad requested before backward()");
  const Node& n = at(v);
  if (!n.requires_grad) throw std::logic_error("tape: node does not track gradients");
  return n.grad;
}

Var Tape::matmul(Var a, Var b) {
  Tensor out = matmul_raw(value(a), false, value(b), false);
  const bool rg = needs_grad(a) || needs_grad(b);
  Var r = push(std::move(out), rg, nullptr);
  if (rg) {
    at(r).backprop = [a, b, r](Tape& t) {
      const Tensor& go = t.at(r).grad;
      if (t.needs_grad(a)) {
        Tensor da = matmul_raw(go, false, t.value(b), true);  // dC * B^T
        Tensor& ga = t.grad_ref(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += da[i];
      }
      if (t.needs_grad(b)) {
        Tensor db = matmul_raw(t.value(a), true, go, false);  // A^T * dC
        Tensor& gb = t.grad_ref(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += db[i];
      }
    };
  }
  return r;
}

Var Tape::transpose(Var a) {
  Tensor out = transpose_raw(value(a));
  const bool rg = needs_grad(a);
  Var r = push(std::move(out), rg, nullptr);
  if (rg) {
    at(r).backprop = [a, r](Tape& t) {
      Tensor gt = transpose_raw(t.at(r).grad);
      Tensor& ga = t.grad_ref(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gt[i];
    };
  }
  return r;
}

// op: 0 add, 1 sub, 2 mul
Var Tape::binary_ew(Var a, Var b, int op) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  const bool b_small = is_suffix(bv.shape, av.shape);
  const bool a_small = is_suffix(av.shape, bv.shape);
  if (!b_small && !a_small)
    throw std::invalid_argument("elementwise: shapes not broadcastable, " + shape_str(av.shape) +
                                " vs " + shape_str(bv.shape));
  const Tensor& big = b_small ? av : bv;
  const std::size_t na = av.size(), nb = bv.size();
  Tensor out = Tensor::zeros(big.shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = av[i % na];
    const double y = bv[i % nb];
    out[i] = op == 0 ? x + y : op == 1 ? x - y : x * y;
  }
  const bool rg = needs_grad(a) || needs_grad(b);
  Var r = push(std::move(out), rg, nullptr);
  if (rg) {
    at(r).backprop = [a, b, r, op](Tape& t) {
      const Tensor& go = t.at(r).grad;
      const Tensor& av2 = t.value(a);
      const Tensor& bv2 = t.value(b);
      const std::size_t na2 = av2.size(), nb2 = bv2.size();
      if (t.needs_grad(a)) {
        Tensor& ga = t.grad_ref(a);
        for (std::size_t i = 0; i < go.size(); ++i) {
          const double d = op == 2 ? go[i] * bv2[i % nb2] : go[i];
          ga[i % na2] += d;
        }
      }
      if (t.needs_grad(b)) {
        Tensor& gb = t.grad_ref(b);
        for (std::size_t i = 0; i < go.size(); ++i) {
          double d;
          if (op == 0)
            d = go[i];
          else if (op == 1)
            d = -go[i];
          else
            d = go[i] * av2[i % na2];
          gb[i % nb2] += d;
        }
      }
    };
  }
  return r;
}

Var Tape::add(Var a, Var b) { return binary_ew(a, b, 0); }
Var Tape::sub(Var a, Var b) { return binary_ew(a, b, 1); }
Var Tape::mul(Var a, Var b) { return binary_ew(a, b, 2); }

// out holds the forward values; dfdx(x, y) is the local derivative given
// input x and output y.
Var Tape::unary(Var a, Tensor out, std::function<double(double, double)> dfdx) {
  const bool rg = needs_grad(a);
  Var r = push(std::move(out), rg, nullptr);
  if (rg) {
    at(r).backprop = [a, r, df = std::move(dfdx)](Tape& t) {
      const Tensor& go = t.at(r).grad;
      const Tensor& x = t.value(a);
      const Tensor& y = t.value(r);
      Tensor& ga = t.grad_ref(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * df(x[i], y[i]);
    };
  }
  return r;
}

Var Tape::negate(Var a) {
  Tensor out = value(a);
  for (double& v : out.data) v = -v;
  return unary(a, std::move(out), [](double, double) { return -1.0; });
}

Var Tape::exp(Var a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::exp(v);
  return unary(a, std::move(out), [](double, double y) { return y; });
}

Var Tape::log(Var a) {
  Tensor out = value(a);
  for (double& v : out.data) {
    if (v <= 0.0)
      throw std::domain_error("log: non-positive input " + std::to_string(v) +
                              " (clip probabilities first)");
    v = std::log(v);
  }
  return unary(a, std::move(out), [](double x, double) { return 1.0 / x; });
}

Var Tape::sigmoid(Var a) {
  Tensor out = value(a);
  for (double& v : out.data) v = sigmoid_stable(v);
  return unary(a, std::move(out), [](double, double y) { return y * (1.0 - y); });
}

Var Tape::relu(Var a) {
  Tensor out = value(a);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return unary(a, std::move(out), [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var Tape::softplus(Var a) {
  Tensor out = value(a);
  for (double& v : out.data) v = softplus_stable(v);
  return unary(a, std::move(out), [](double x, double) { return sigmoid_stable(x); });
}

Var Tape::powc(Var a, double c) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::pow(v, c);
  return unary(a, std::move(out), [c](double x, double) { return c * std::pow(x, c - 1.0); });
}

Var Tape::clamp(Var a, double lo, double hi) {
  Tensor out = value(a);
  for (double& v : out.data) v = v < lo ? lo : (v > hi ? hi : v);
  return unary(a, std::move(out),
               [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var Tape::scale(Var a, double c) {
  Tensor out = value(a);
  for (double& v : out.data) v *= c;
  return unary(a, std::move(out), [c](double, double) { return c; });
}

Var Tape::shift(Var a, double c) {
  Tensor out = value(a);
  for (double& v : out.data) v += c;
  return unary(a, std::move(out), [](double, double) { return 1.0; });
}

Var Tape::mul_rows(Var m, Var v) {
  const Tensor& mv = value(m);
  const Tensor& vv = value(v);
  if (mv.rank() != 2 || vv.rank() != 1 || vv.shape[0] != mv.rows())
    throw std::invalid_argument("mul_rows: need [NxM] and [N], got " + shape_str(mv.shape) +
                                " and " + shape_str(vv.shape));
  Tensor out = Tensor::zeros(mv.shape);
  const std::size_t rows = mv.rows(), cols = mv.cols();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = mv(i, j) * vv[i];
  const bool rg = needs_grad(m) || needs_grad(v);
  Var r = push(std::move(out), rg, nullptr);
  if (rg) {
    at(r).backprop = [m, v, r, rows, cols](Tape& t) {
      const Tensor& go = t.at(r).grad;
      const Tensor& mv2 = t.value(m);
      const Tensor& vv2 = t.value(v);
      if (t.needs_grad(m)) {
        Tensor& gm = t.grad_ref(m);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) gm(i, j) += go(i, j) * vv2[i];
      }
      if (t.needs_grad(v)) {
        Tensor& gv = t.grad_ref(v);
        for (std::size_t i = 0; i < rows; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < cols; ++j) s += go(i, j) * mv2(i, j);
          gv[i] += s;
        }
      }
    };
  }
  return r;
}

Var Tape::concat2d(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no parts");
  std::size_t rows = 0, cols = 0;
  bool rg = false;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& pv = value(parts[p]);
    if (pv.rank() != 2) throw std::invalid_argument("concat: parts must be rank 2");
    if (axis == 0) {
      if (p == 0)
        cols = pv.cols();
      else if (pv.cols() != cols)
        throw std::invalid_argument("concat_rows: column mismatch");
      rows += pv.rows();
    } else {
      if (p == 0)
        rows = pv.rows();
      else if (pv.rows() != rows)
        throw std::invalid_argument("concat_cols: row mismatch");
      cols += pv.cols();
    }
    rg = rg || needs_grad(parts[p]);
  }
  Tensor out = Tensor::zeros({rows, cols});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = value(p);
    if (axis == 0) {
      for (std::size_t i = 0; i < pv.rows(); ++i)
        for (std::size_t j = 0; j < cols; ++j) out(off + i, j) = pv(i, j);
      off += pv.rows();
    } else {
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < pv.cols(); ++j) out(i, off + j) = pv(i, j);
      off += pv.cols();
    }
  }
  Var r = push(std::move(out), rg, nullptr);
  if (rg) {
    at(r).backprop = [parts, r, axis](Tape& t) {
      const Tensor& go = t.at(r).grad;
      std::size_t off2 = 0;
      for (Var p : parts) {
        const Tensor& pv = t.value(p);
        if (t.needs_grad(p)) {
          Tensor& gp = t.grad_ref(p);
          for (std::size_t i = 0; i < pv.rows(); ++i)
            for (std::size_t j = 0; j < pv.cols(); ++j)
              gp(i, j) += axis == 0 ? go(off2 + i, j) : go(i, off2 + j);
        }
        off2 += axis == 0 ? pv.rows() : pv.cols();
      }
    };
  }
  return r;
}

Var Tape::concat_rows(const std::vector<Var>& parts) { return concat2d(parts, 0); }
Var Tape::concat_cols(const std::vector<Var>& parts) { return concat2d(parts, 1); }

Var Tape::slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = value(a);
  if (av.rank() != 2 || begin + count > av.rows())
    throw std::invalid_argument("slice_rows: bad range [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") for " + shape_str(av.shape));
  Tensor out = Tensor::zeros({count, av.cols()});
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) = av(begin + i, j);
  const bool rg = needs_grad(a);
  Var r = push(std::move(out), rg, nullptr);
  if (rg) {
    at(r).backprop = [a, r, begin, count](Tape& t) {
      const Tensor& go = t.at(r).grad;
      Tensor& ga = t.grad_ref(a);
      for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < go.cols(); ++j) ga(begin + i, j) += go(i, j);
    };
  }
  return r;
}

Var Tape::reduce_all(Var a, bool take_mean) {
  const Tensor& av = value(a);
  double s = 0.0;
  for (double v : av.data) s += v;
  const double denom = take_mean ? static_cast<double>(av.size()) : 1.0;
  const bool rg = needs_grad(a);
  Var r = push(Tensor::scalar(s / denom), rg, nullptr);
  if (rg) {
    at(r).backprop = [a, r, denom](Tape& t) {
      const double g = t.at(r).grad.item() / denom;
      Tensor& ga = t.grad_ref(a);
      for (double& v : ga.data) v += g;
    };
  }
  return r;
}

Var Tape::reduce_axis(Var a, std::size_t axis, bool take_mean) {
  const Tensor& av = value(a);
  if (axis >= av.rank())
    throw std::invalid_argument("reduce: axis " + std::to_string(axis) + " out of range for " +
                                shape_str(av.shape));
  std::size_t outer = 1, inner = 1;
  const std::size_t mid = av.shape[axis];
  for (std::size_t i = 0; i < axis; ++i) outer *= av.shape[i];
  for (std::size_t i = axis + 1; i < av.rank(); ++i) inner *= av.shape[i];
  Shape out_shape;
  for (std::size_t i = 0; i < av.rank(); ++i)
    if (i != axis) out_shape.push_back(av.shape[i]);
  Tensor out = Tensor::zeros(out_shape);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t m = 0; m < mid; ++m)
      for (std::size_t in = 0; in < inner; ++in)
        out[o * inner + in] += av[(o * mid + m) * inner + in];
  const double denom = take_mean ? static_cast<double>(mid) : 1.0;
  if (take_mean)
    for (double& v : out.data) v /= denom;
  const bool rg = needs_grad(a);
  Var r = push(std::move(out), rg, nullptr);
  if (rg) {
    at(r).backprop = [a, r, outer, mid, inner, denom](Tape& t) {
      const Tensor& go = t.at(r).grad;
      Tensor& ga = t.grad_ref(a);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t m = 0; m < mid; ++m)
          for (std::size_t in = 0; in < inner; ++in)
            ga[(o * mid + m) * inner + in] += go[o * inner + in] / denom;
    };
  }
  return r;
}

Var Tape::sum(Var a) { return reduce_all(a, false); }
Var Tape::sum_axis(Var a, std::size_t axis) { return reduce_axis(a, axis, false); }
Var Tape::mean(Var a) { return reduce_all(a, true); }
Var Tape::mean_axis(Var a, std::size_t axis) { return reduce_axis(a, axis, true); }

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw std::logic_error("backward: empty tape");
  if (ran_backward_) throw std::logic_error("backward: already run on this tape");
  const Node& ln = at(loss);
  if (ln.value.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(ln.value.shape));
  for (Node& n : nodes_)
    if (n.requires_grad) n.grad = Tensor::zeros(n.value.shape);
  ran_backward_ = true;
  if (!ln.requires_grad) return;  // nothing depends on gradients
  at(loss).grad.data[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    if (n.backprop) n.backprop(*this);
    if (n.sink) {
      if (!n.sink->grad.same_shape(n.grad))
        throw std::logic_error("backward: parameter grad shape mismatch for " + n.sink->name);
      for (std::size_t k = 0; k < n.grad.size(); ++k) n.sink->grad[k] += n.grad[k];
    }
  }
}

}  // namespace bayrel
