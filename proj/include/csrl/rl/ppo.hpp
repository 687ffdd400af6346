#pragma once

#include <Eigen/Core>
#include <vector>

#include "csrl/nn/mlp.hpp"
#include "csrl/nn/tape.hpp"
#include "csrl/rng.hpp"

namespace csrl::rl {

// Gaussian policy: tanh mean network plus state-independent learnable
// log-stds. The deterministic action is the mean; exploration samples
// mean + std * noise (clamped to the action box only at execution time, so
// stored actions keep an exact Gaussian log-density).
struct PolicyNet {
  nn::Mlp mean_net;
  Eigen::VectorXd log_std;
  mutable Eigen::VectorXd log_std_grad;

  PolicyNet() = default;
  PolicyNet(int obs_dim, int action_dim, const std::vector<int>& hidden,
            double init_log_std = -0.5);

  int action_dim() const { return static_cast<int>(log_std.size()); }

  Eigen::VectorXd mean(const Eigen::VectorXd& obs) const { return mean_net.forward(obs); }
  nn::Var mean_var(nn::Tape& t, nn::Var obs) const { return mean_net.apply(t, obs); }

  Eigen::VectorXd sample(const Eigen::VectorXd& obs, Rng& rng) const;
  double log_prob(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const;

  // Sum of per-dimension Gaussian entropies, 0.5*log(2*pi*e) + log_std.
  double entropy() const;

  void zero_grad() const {
    mean_net.zero_grad();
    log_std_grad.setZero();
  }
};

struct RolloutBatch {
  std::vector<Eigen::VectorXd> obs, actions;
  std::vector<double> log_probs_old, rewards, costs, values, next_values;
  std::vector<bool> episode_end;  // last transition of an episode (terminal or truncated)
  std::vector<bool> terminal;     // true termination: bootstrap with V = 0
  std::vector<double> advantages, returns;

  int size() const { return static_cast<int>(obs.size()); }
};

// Standard GAE(gamma, lambda); fills advantages (raw) and returns
// (advantage + value). next_values must hold V(s') with terminal steps
// bootstrapping zero.
void gae_advantages(RolloutBatch& batch, double gamma, double lam);

// In-place mean-0 / std-1 normalization of batch.advantages.
void normalize_advantages(RolloutBatch& batch, double eps = 1e-8);

struct RlLosses {
  nn::Var actor;   // clipped surrogate minus entropy bonus
  nn::Var critic;  // mean squared TD(lambda) return error
  double actor_value = 0.0;
  double critic_value = 0.0;
  double entropy = 0.0;
};

RlLosses rl_losses(nn::Tape& t, const PolicyNet& policy, const nn::Mlp& critic,
                   const RolloutBatch& batch, const std::vector<int>& idx, double clip,
                   double entropy_coef);

}  // namespace csrl::rl
