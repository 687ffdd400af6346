#pragma once

#include <Eigen/Core>
#include <functional>
#include <stdexcept>
#include <vector>

namespace csrl::nn {

struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

// Reverse-mode tape over vector-valued nodes. Built per loss evaluation,
// single backward pass, then discarded or clear()ed. Not thread-safe; use one
// tape per thread.
class Tape {
public:
  using BackFn = std::function<void(Tape&, const Eigen::VectorXd&)>;

  struct Node {
    Eigen::VectorXd value;
    Eigen::VectorXd grad;
    BackFn back;  // propagates upstream grad to inputs / parameter buffers
  };

  Var leaf(Eigen::VectorXd v) { return make(std::move(v), nullptr); }

  Var scalar(double v) { return leaf(Eigen::VectorXd::Constant(1, v)); }

  Var make(Eigen::VectorXd v, BackFn back) {
    Node n;
    n.grad = Eigen::VectorXd::Zero(v.size());
    n.value = std::move(v);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
  }

  // Leaf backed by an external parameter vector; gradients accumulate into
  // *grad_out during backward().
  Var param(const Eigen::VectorXd& value, Eigen::VectorXd* grad_out) {
    return make(value, [grad_out](Tape&, const Eigen::VectorXd& g) { *grad_out += g; });
  }

  const Eigen::VectorXd& val(Var v) const { return nodes_[v.i].value; }
  double sval(Var v) const { return nodes_[v.i].value[0]; }

  void add_grad(Var v, const Eigen::VectorXd& g) { nodes_[v.i].grad += g; }
  const Eigen::VectorXd& grad(Var v) const { return nodes_[v.i].grad; }

  void backward(Var out) {
    if (nodes_[out.i].value.size() != 1)
      throw std::invalid_argument("Tape::backward: loss must be scalar");
    if (ran_backward_)
      throw std::logic_error("Tape::backward: tape already backpropagated; use a fresh tape");
    ran_backward_ = true;
    nodes_[out.i].grad[0] += 1.0;
    for (int i = out.i; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.back && (n.grad.array() != 0.0).any()) n.back(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() {
    nodes_.clear();
    ran_backward_ = false;
  }

private:
  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

// ---- elementwise / structural ops ------------------------------------------

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var neg(Tape& t, Var a);
Var scale(Tape& t, Var a, double c);
Var add_const(Tape& t, Var a, double c);
Var cmul(Tape& t, Var a, Var b);          // hadamard
Var cdiv(Tape& t, Var a, Var b);          // elementwise a / b
Var cmax(Tape& t, Var a, Var b);          // ties go to a
Var cmin(Tape& t, Var a, Var b);          // ties go to a
Var cmax_const(Tape& t, Var a, double c); // max(a_j, c), tie -> a
Var vabs(Tape& t, Var a);                 // |a|, subgradient sign(a) (0 at 0)
Var vtanh(Tape& t, Var a);
Var vsigmoid(Tape& t, Var a);
Var vexp(Tape& t, Var a);
Var concat(Tape& t, const std::vector<Var>& parts);
Var slice(Tape& t, Var a, int offset, int len);
Var smul(Tape& t, Var s, Var a);          // scalar s times vector a

// ---- reductions -------------------------------------------------------------

Var vsum(Tape& t, Var a);
Var vmean(Tape& t, Var a);
Var vdot(Tape& t, Var a, Var b);
Var vprod(Tape& t, Var a);                // product of entries
Var vmax(Tape& t, Var a);                 // max entry, subgradient to first argmax
Var maxs(Tape& t, Var a, Var b);          // scalar max, tie -> a
Var mins(Tape& t, Var a, Var b);          // scalar min, tie -> a
Var norm2(Tape& t, Var a);                // Euclidean norm, zero subgradient at 0

}  // namespace csrl::nn
