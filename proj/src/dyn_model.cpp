#include "csrl/dyn/model.hpp"

#include <cmath>
#include <stdexcept>

namespace csrl::dyn {

using nn::Tape;
using nn::Var;

Standardizer Standardizer::fit(const std::vector<Eigen::VectorXd>& xs, double std_floor) {
  if (xs.empty()) throw std::invalid_argument("Standardizer::fit: empty data");
  const int dim = static_cast<int>(xs.front().size());
  Standardizer s;
  s.mean = Eigen::VectorXd::Zero(dim);
  for (const auto& x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
  for (const auto& x : xs) var += (x - s.mean).cwiseAbs2();
  var /= static_cast<double>(xs.size());
  s.std = var.cwiseSqrt().cwiseMax(std_floor);
  return s;
}

Standardizer Standardizer::identity(int dim) {
  Standardizer s;
  s.mean = Eigen::VectorXd::Zero(dim);
  s.std = Eigen::VectorXd::Ones(dim);
  return s;
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& x) const {
  return (x - mean).cwiseQuotient(std);
}

Var Standardizer::apply_var(Tape& t, Var x) const {
  Var centered = nn::sub(t, x, t.leaf(mean));
  return nn::cdiv(t, centered, t.leaf(std));
}

DynModel::DynModel(int state_dim, int action_dim, const std::vector<int>& hidden)
    : state_dim_(state_dim), action_dim_(action_dim) {
  std::vector<int> sizes;
  sizes.push_back(state_dim + action_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(state_dim);
  net_ = nn::Mlp(sizes, nn::Act::Linear);
  std_ = Standardizer::identity(state_dim + action_dim);
}

Eigen::VectorXd DynModel::predict(const Eigen::VectorXd& state,
                                  const Eigen::VectorXd& action) const {
  if (state.size() != state_dim_ || action.size() != action_dim_)
    throw std::invalid_argument("DynModel::predict: dimension mismatch");
  Eigen::VectorXd x(state_dim_ + action_dim_);
  x << state, action;
  return state + net_.forward(std_.apply(x));
}

Var DynModel::predict_var(Tape& t, Var state, Var action) const {
  if (t.val(state).size() != state_dim_ || t.val(action).size() != action_dim_)
    throw std::invalid_argument("DynModel::predict_var: dimension mismatch");
  Var x = nn::concat(t, {state, action});
  Var delta = net_.apply(t, std_.apply_var(t, x));
  return nn::add(t, state, delta);
}

double dyn_loss(const DynModel& model, const std::vector<Transition>& batch,
                const Eigen::VectorXd& w) {
  if (batch.empty()) throw std::invalid_argument("dyn_loss: empty batch");
  double total = 0.0;
  for (const Transition& tr : batch) {
    Eigen::VectorXd r = model.predict(tr.state, tr.action) - tr.next_state;
    total += r.dot(w.cwiseProduct(r));
  }
  return total / static_cast<double>(batch.size());
}

Var dyn_loss_var(Tape& t, const DynModel& model, const std::vector<Transition>& batch,
                 const Eigen::VectorXd& w) {
  if (batch.empty()) throw std::invalid_argument("dyn_loss_var: empty batch");
  Var wv = t.leaf(w);
  Var total = t.scalar(0.0);
  for (const Transition& tr : batch) {
    Var pred = model.predict_var(t, t.leaf(tr.state), t.leaf(tr.action));
    Var r = nn::sub(t, pred, t.leaf(tr.next_state));
    total = nn::add(t, total, nn::vdot(t, r, nn::cmul(t, wv, r)));
  }
  return nn::scale(t, total, 1.0 / static_cast<double>(batch.size()));
}

RolloutResult rollout(const DynModel& model, const PolicyFn& policy, const env::Env& env,
                      const Eigen::VectorXd& s0, int K, int t0) {
  if (K < 1) throw std::invalid_argument("rollout: K must be >= 1");
  RolloutResult out;
  out.states.reserve(K);
  out.actions.reserve(K);
  Eigen::VectorXd s = s0;
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXd a = policy(env.observe(s, t0 + k));
    s = model.predict(s, a);
    if (!s.allFinite() || s.norm() > kRolloutDivergence)
      throw std::runtime_error("rollout: surrogate diverged");
    out.actions.push_back(std::move(a));
    out.states.push_back(s);
  }
  return out;
}

std::vector<Var> rollout_var(Tape& t, const DynModel& model, const PolicyVarFn& policy,
                             const env::Env& env, Var s0, int K, int t0,
                             std::vector<Var>* actions_out) {
  if (K < 1) throw std::invalid_argument("rollout_var: K must be >= 1");
  std::vector<Var> states;
  states.reserve(K);
  Var s = s0;
  for (int k = 0; k < K; ++k) {
    Var a = policy(t, env.observe_var(t, s, t0 + k));
    s = model.predict_var(t, s, a);
    const Eigen::VectorXd& sv = t.val(s);
    if (!sv.allFinite() || sv.norm() > kRolloutDivergence)
      throw std::runtime_error("rollout_var: surrogate diverged");
    if (actions_out) actions_out->push_back(a);
    states.push_back(s);
  }
  return states;
}

}  // namespace csrl::dyn
