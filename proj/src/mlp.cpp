#include "csrl/nn/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace csrl::nn {

Act act_from_string(const std::string& s) {
  if (s == "tanh") return Act::Tanh;
  if (s == "linear") return Act::Linear;
  if (s == "sigmoid") return Act::Sigmoid;
  throw std::invalid_argument("unknown activation: " + s);
}

std::string act_to_string(Act a) {
  switch (a) {
    case Act::Tanh: return "tanh";
    case Act::Linear: return "linear";
    case Act::Sigmoid: return "sigmoid";
  }
  return "linear";
}

Mlp::Mlp(std::vector<int> layer_sizes, Act output_act, Act hidden_act)
    : sizes_(std::move(layer_sizes)), hidden_act_(hidden_act), out_act_(output_act) {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least one layer");
  for (int s : sizes_)
    if (s <= 0) throw std::invalid_argument("Mlp: layer sizes must be positive");
  int total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total);
    total += (sizes_[l] + 1) * sizes_[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(total);
  grads_ = Eigen::VectorXd::Zero(total);
}

void Mlp::init_uniform(Rng& rng) {
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    int n = (sizes_[l] + 1) * sizes_[l + 1];
    for (int k = 0; k < n; ++k) params_[offsets_[l] + k] = rng.uniform(-bound, bound);
  }
}

void Mlp::activation_inplace(int layer, Eigen::VectorXd& v) const {
  Act a = (static_cast<std::size_t>(layer) + 2 == sizes_.size()) ? out_act_ : hidden_act_;
  switch (a) {
    case Act::Tanh: v = v.array().tanh(); break;
    case Act::Sigmoid: v = (1.0 / (1.0 + (-v.array()).exp())).matrix(); break;
    case Act::Linear: break;
  }
}

Eigen::VectorXd Mlp::layer_out(int layer, const Eigen::VectorXd& x) const {
  int in = sizes_[layer], out = sizes_[layer + 1];
  Eigen::Map<const Eigen::MatrixXd> W(params_.data() + offsets_[layer], out, in);
  Eigen::Map<const Eigen::VectorXd> b(params_.data() + offsets_[layer] + out * in, out);
  return W * x + b;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  if (x.size() != sizes_.front())
    throw std::invalid_argument("Mlp::forward: input dimension mismatch");
  Eigen::VectorXd v = x;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    v = layer_out(static_cast<int>(l), v);
    activation_inplace(static_cast<int>(l), v);
  }
  return v;
}

Var Mlp::apply(Tape& t, Var x) const {
  if (t.val(x).size() != sizes_.front())
    throw std::invalid_argument("Mlp::apply: input dimension mismatch");
  Var v = x;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    int in = sizes_[l], out = sizes_[l + 1], off = offsets_[l];
    const Mlp* self = this;
    Var pre = t.make(layer_out(static_cast<int>(l), t.val(v)),
                     [self, v, in, out, off](Tape& t, const Eigen::VectorXd& g) {
                       Eigen::Map<const Eigen::MatrixXd> W(self->params_.data() + off, out, in);
                       Eigen::Map<Eigen::MatrixXd> gW(self->grads_.data() + off, out, in);
                       Eigen::Map<Eigen::VectorXd> gb(self->grads_.data() + off + out * in, out);
                       gW.noalias() += g * t.val(v).transpose();
                       gb += g;
                       t.add_grad(v, W.transpose() * g);
                     });
    Act a = (l + 2 == sizes_.size()) ? out_act_ : hidden_act_;
    switch (a) {
      case Act::Tanh: v = vtanh(t, pre); break;
      case Act::Sigmoid: v = vsigmoid(t, pre); break;
      case Act::Linear: v = pre; break;
    }
  }
  return v;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state, double lr) {
  if (!grads.allFinite()) throw std::runtime_error("adam_step: non-finite gradient");
  if (params.size() != grads.size() || state.m.size() != params.size())
    throw std::invalid_argument("adam_step: size mismatch");
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseProduct(grads);
  double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  Eigen::ArrayXd mhat = state.m.array() / c1;
  Eigen::ArrayXd vhat = state.v.array() / c2;
  params.array() -= lr * mhat / (vhat.sqrt() + state.eps);
}

double LrSchedule::lr(long t) const {
  if (t < 0) t = 0;
  if (t > total_steps) t = total_steps;
  double frac = total_steps > 0 ? static_cast<double>(t) / static_cast<double>(total_steps) : 1.0;
  switch (kind) {
    case ScheduleKind::Constant: return lr_start;
    case ScheduleKind::LinearDecay: return lr_start + (lr_end - lr_start) * frac;
    case ScheduleKind::CosineDecay:
      return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(3.141592653589793 * frac));
  }
  return lr_start;
}

}  // namespace csrl::nn
