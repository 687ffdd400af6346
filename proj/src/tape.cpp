#include "csrl/nn/tape.hpp"

namespace csrl::nn {

namespace {
void check_same_size(const Tape& t, Var a, Var b, const char* op) {
  if (t.val(a).size() != t.val(b).size())
    throw std::invalid_argument(std::string(op) + ": size mismatch");
}
}  // namespace

Var add(Tape& t, Var a, Var b) {
  check_same_size(t, a, b, "add");
  return t.make(t.val(a) + t.val(b), [a, b](Tape& t, const Eigen::VectorXd& g) {
    t.add_grad(a, g);
    t.add_grad(b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  check_same_size(t, a, b, "sub");
  return t.make(t.val(a) - t.val(b), [a, b](Tape& t, const Eigen::VectorXd& g) {
    t.add_grad(a, g);
    t.add_grad(b, -g);
  });
}

Var neg(Tape& t, Var a) {
  return t.make(-t.val(a), [a](Tape& t, const Eigen::VectorXd& g) { t.add_grad(a, -g); });
}

Var scale(Tape& t, Var a, double c) {
  return t.make(c * t.val(a), [a, c](Tape& t, const Eigen::VectorXd& g) { t.add_grad(a, c * g); });
}

Var add_const(Tape& t, Var a, double c) {
  return t.make(t.val(a).array() + c, [a](Tape& t, const Eigen::VectorXd& g) { t.add_grad(a, g); });
}

Var cmul(Tape& t, Var a, Var b) {
  check_same_size(t, a, b, "cmul");
  return t.make(t.val(a).cwiseProduct(t.val(b)), [a, b](Tape& t, const Eigen::VectorXd& g) {
    t.add_grad(a, g.cwiseProduct(t.val(b)));
    t.add_grad(b, g.cwiseProduct(t.val(a)));
  });
}

Var cdiv(Tape& t, Var a, Var b) {
  check_same_size(t, a, b, "cdiv");
  return t.make(t.val(a).cwiseQuotient(t.val(b)), [a, b](Tape& t, const Eigen::VectorXd& g) {
    const Eigen::VectorXd& bv = t.val(b);
    t.add_grad(a, g.cwiseQuotient(bv));
    t.add_grad(b, -g.cwiseProduct(t.val(a)).cwiseQuotient(bv.cwiseProduct(bv)));
  });
}

Var cmax(Tape& t, Var a, Var b) {
  check_same_size(t, a, b, "cmax");
  return t.make(t.val(a).cwiseMax(t.val(b)), [a, b](Tape& t, const Eigen::VectorXd& g) {
    const Eigen::VectorXd &av = t.val(a), &bv = t.val(b);
    Eigen::VectorXd ga = Eigen::VectorXd::Zero(g.size());
    Eigen::VectorXd gb = Eigen::VectorXd::Zero(g.size());
    for (int j = 0; j < g.size(); ++j) (av[j] >= bv[j] ? ga[j] : gb[j]) = g[j];
    t.add_grad(a, ga);
    t.add_grad(b, gb);
  });
}

Var cmin(Tape& t, Var a, Var b) {
  check_same_size(t, a, b, "cmin");
  return t.make(t.val(a).cwiseMin(t.val(b)), [a, b](Tape& t, const Eigen::VectorXd& g) {
    const Eigen::VectorXd &av = t.val(a), &bv = t.val(b);
    Eigen::VectorXd ga = Eigen::VectorXd::Zero(g.size());
    Eigen::VectorXd gb = Eigen::VectorXd::Zero(g.size());
    for (int j = 0; j < g.size(); ++j) (av[j] <= bv[j] ? ga[j] : gb[j]) = g[j];
    t.add_grad(a, ga);
    t.add_grad(b, gb);
  });
}

Var cmax_const(Tape& t, Var a, double c) {
  return t.make(t.val(a).cwiseMax(c), [a, c](Tape& t, const Eigen::VectorXd& g) {
    Eigen::VectorXd ga = Eigen::VectorXd::Zero(g.size());
    const Eigen::VectorXd& av = t.val(a);
    for (int j = 0; j < g.size(); ++j)
      if (av[j] >= c) ga[j] = g[j];
    t.add_grad(a, ga);
  });
}

Var vabs(Tape& t, Var a) {
  return t.make(t.val(a).cwiseAbs(), [a](Tape& t, const Eigen::VectorXd& g) {
    const Eigen::VectorXd& av = t.val(a);
    Eigen::VectorXd ga(g.size());
    for (int j = 0; j < g.size(); ++j) ga[j] = av[j] > 0 ? g[j] : (av[j] < 0 ? -g[j] : 0.0);
    t.add_grad(a, ga);
  });
}

Var vtanh(Tape& t, Var a) {
  return t.make(t.val(a).array().tanh(), [a](Tape& t, const Eigen::VectorXd& g) {
    Eigen::ArrayXd y = t.val(a).array().tanh();
    t.add_grad(a, (g.array() * (1.0 - y * y)).matrix());
  });
}

Var vsigmoid(Tape& t, Var a) {
  Eigen::ArrayXd y = 1.0 / (1.0 + (-t.val(a).array()).exp());
  return t.make(y.matrix(), [a, y](Tape& t, const Eigen::VectorXd& g) {
    t.add_grad(a, (g.array() * y * (1.0 - y)).matrix());
  });
}

Var vexp(Tape& t, Var a) {
  Eigen::ArrayXd y = t.val(a).array().exp();
  return t.make(y.matrix(), [a, y](Tape& t, const Eigen::VectorXd& g) {
    t.add_grad(a, (g.array() * y).matrix());
  });
}

Var concat(Tape& t, const std::vector<Var>& parts) {
  Eigen::Index total = 0;
  for (Var p : parts) total += t.val(p).size();
  Eigen::VectorXd v(total);
  Eigen::Index off = 0;
  for (Var p : parts) {
    v.segment(off, t.val(p).size()) = t.val(p);
    off += t.val(p).size();
  }
  return t.make(std::move(v), [parts](Tape& t, const Eigen::VectorXd& g) {
    Eigen::Index off = 0;
    for (Var p : parts) {
      Eigen::Index n = t.val(p).size();
      t.add_grad(p, g.segment(off, n));
      off += n;
    }
  });
}

Var slice(Tape& t, Var a, int offset, int len) {
  return t.make(t.val(a).segment(offset, len), [a, offset, len](Tape& t, const Eigen::VectorXd& g) {
    Eigen::VectorXd ga = Eigen::VectorXd::Zero(t.val(a).size());
    ga.segment(offset, len) = g;
    t.add_grad(a, ga);
  });
}

Var smul(Tape& t, Var s, Var a) {
  if (t.val(s).size() != 1) throw std::invalid_argument("smul: scalar expected");
  return t.make(t.sval(s) * t.val(a), [s, a](Tape& t, const Eigen::VectorXd& g) {
    t.add_grad(a, t.sval(s) * g);
    Eigen::VectorXd gs(1);
    gs[0] = g.dot(t.val(a));
    t.add_grad(s, gs);
  });
}

Var vsum(Tape& t, Var a) {
  return t.make(Eigen::VectorXd::Constant(1, t.val(a).sum()),
                [a](Tape& t, const Eigen::VectorXd& g) {
                  t.add_grad(a, Eigen::VectorXd::Constant(t.val(a).size(), g[0]));
                });
}

Var vmean(Tape& t, Var a) {
  double n = static_cast<double>(t.val(a).size());
  return t.make(Eigen::VectorXd::Constant(1, t.val(a).mean()),
                [a, n](Tape& t, const Eigen::VectorXd& g) {
                  t.add_grad(a, Eigen::VectorXd::Constant(t.val(a).size(), g[0] / n));
                });
}

Var vdot(Tape& t, Var a, Var b) {
  check_same_size(t, a, b, "vdot");
  return t.make(Eigen::VectorXd::Constant(1, t.val(a).dot(t.val(b))),
                [a, b](Tape& t, const Eigen::VectorXd& g) {
                  t.add_grad(a, g[0] * t.val(b));
                  t.add_grad(b, g[0] * t.val(a));
                });
}

Var vprod(Tape& t, Var a) {
  return t.make(Eigen::VectorXd::Constant(1, t.val(a).prod()),
                [a](Tape& t, const Eigen::VectorXd& g) {
                  const Eigen::VectorXd& av = t.val(a);
                  Eigen::VectorXd ga(av.size());
                  for (int j = 0; j < av.size(); ++j) {
                    double p = 1.0;
                    for (int k = 0; k < av.size(); ++k)
                      if (k != j) p *= av[k];
                    ga[j] = g[0] * p;
                  }
                  t.add_grad(a, ga);
                });
}

Var vmax(Tape& t, Var a) {
  int idx = 0;
  double m = t.val(a).maxCoeff(&idx);
  return t.make(Eigen::VectorXd::Constant(1, m), [a, idx](Tape& t, const Eigen::VectorXd& g) {
    Eigen::VectorXd ga = Eigen::VectorXd::Zero(t.val(a).size());
    ga[idx] = g[0];
    t.add_grad(a, ga);
  });
}

Var maxs(Tape& t, Var a, Var b) {
  bool pick_a = t.sval(a) >= t.sval(b);
  return t.make(Eigen::VectorXd::Constant(1, pick_a ? t.sval(a) : t.sval(b)),
                [a, b, pick_a](Tape& t, const Eigen::VectorXd& g) {
                  t.add_grad(pick_a ? a : b, g);
                });
}

Var mins(Tape& t, Var a, Var b) {
  bool pick_a = t.sval(a) <= t.sval(b);
  return t.make(Eigen::VectorXd::Constant(1, pick_a ? t.sval(a) : t.sval(b)),
                [a, b, pick_a](Tape& t, const Eigen::VectorXd& g) {
                  t.add_grad(pick_a ? a : b, g);
                });
}

Var norm2(Tape& t, Var a) {
  double n = t.val(a).norm();
  return t.make(Eigen::VectorXd::Constant(1, n), [a, n](Tape& t, const Eigen::VectorXd& g) {
    if (n > 1e-12) t.add_grad(a, (g[0] / n) * t.val(a));
  });
}

}  // namespace csrl::nn
