#include "csrl/rl/ppo.hpp"

#include <cmath>
#include <stdexcept>

namespace csrl::rl {

using nn::Tape;
using nn::Var;

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
}

PolicyNet::PolicyNet(int obs_dim, int action_dim, const std::vector<int>& hidden,
                     double init_log_std) {
  std::vector<int> sizes;
  sizes.push_back(obs_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(action_dim);
  mean_net = nn::Mlp(sizes, nn::Act::Tanh);
  log_std = Eigen::VectorXd::Constant(action_dim, init_log_std);
  log_std_grad = Eigen::VectorXd::Zero(action_dim);
}

Eigen::VectorXd PolicyNet::sample(const Eigen::VectorXd& obs, Rng& rng) const {
  Eigen::VectorXd a = mean(obs);
  for (int j = 0; j < a.size(); ++j) a[j] += std::exp(log_std[j]) * rng.normal();
  return a;
}

double PolicyNet::log_prob(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const {
  Eigen::VectorXd mu = mean(obs);
  double lp = 0.0;
  for (int j = 0; j < action.size(); ++j) {
    double z = (action[j] - mu[j]) * std::exp(-log_std[j]);
    lp += -0.5 * z * z - log_std[j] - 0.5 * kLog2Pi;
  }
  return lp;
}

double PolicyNet::entropy() const {
  return log_std.sum() + 0.5 * (kLog2Pi + 1.0) * static_cast<double>(log_std.size());
}

void gae_advantages(RolloutBatch& batch, double gamma, double lam) {
  const int n = batch.size();
  batch.advantages.assign(n, 0.0);
  batch.returns.assign(n, 0.0);
  double running = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    double next_v = batch.terminal[t] ? 0.0 : batch.next_values[t];
    double delta = batch.rewards[t] + gamma * next_v - batch.values[t];
    if (batch.episode_end[t]) running = 0.0;
    running = delta + gamma * lam * running;
    batch.advantages[t] = running;
    batch.returns[t] = running + batch.values[t];
  }
}

void normalize_advantages(RolloutBatch& batch, double eps) {
  const int n = batch.size();
  if (n == 0) return;
  double mean = 0.0;
  for (double a : batch.advantages) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : batch.advantages) var += (a - mean) * (a - mean);
  double std = std::sqrt(var / n);
  for (double& a : batch.advantages) a = (a - mean) / (std + eps);
}

RlLosses rl_losses(Tape& t, const PolicyNet& policy, const nn::Mlp& critic,
                   const RolloutBatch& batch, const std::vector<int>& idx, double clip,
                   double entropy_coef) {
  if (idx.empty()) throw std::invalid_argument("rl_losses: empty minibatch");
  const double inv_n = 1.0 / static_cast<double>(idx.size());
  const int d = policy.action_dim();

  Var log_std = t.param(policy.log_std, &policy.log_std_grad);
  Var inv_std = nn::vexp(t, nn::neg(t, log_std));
  Var lo = t.scalar(1.0 - clip), hi = t.scalar(1.0 + clip);

  Var actor = t.scalar(0.0);
  Var critic_loss = t.scalar(0.0);
  for (int i : idx) {
    Var mu = policy.mean_var(t, t.leaf(batch.obs[i]));
    Var z = nn::cmul(t, nn::sub(t, t.leaf(batch.actions[i]), mu), inv_std);
    Var logp = nn::add_const(
        t, nn::sub(t, nn::scale(t, nn::vdot(t, z, z), -0.5), nn::vsum(t, log_std)),
        -0.5 * kLog2Pi * d);
    Var ratio = nn::vexp(t, nn::add_const(t, logp, -batch.log_probs_old[i]));
    Var clipped = nn::maxs(t, nn::mins(t, ratio, hi), lo);
    const double adv = batch.advantages[i];
    Var surrogate = nn::mins(t, nn::scale(t, ratio, adv), nn::scale(t, clipped, adv));
    actor = nn::add(t, actor, surrogate);

    Var v = critic.apply(t, t.leaf(batch.obs[i]));
    Var err = nn::add_const(t, v, -batch.returns[i]);
    critic_loss = nn::add(t, critic_loss, nn::vdot(t, err, err));
  }
  actor = nn::scale(t, actor, -inv_n);
  critic_loss = nn::scale(t, critic_loss, inv_n);

  // entropy bonus: 0.5*log(2*pi*e) per dim plus the learnable log stds
  Var ent = nn::add_const(t, nn::vsum(t, log_std), 0.5 * (kLog2Pi + 1.0) * d);
  RlLosses out;
  out.actor = nn::sub(t, actor, nn::scale(t, ent, entropy_coef));
  out.critic = critic_loss;
  out.actor_value = t.sval(out.actor);
  out.critic_value = t.sval(out.critic);
  out.entropy = t.sval(ent);
  return out;
}

}  // namespace csrl::rl
