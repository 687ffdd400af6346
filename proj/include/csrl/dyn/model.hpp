#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "csrl/env/env.hpp"
#include "csrl/nn/mlp.hpp"
#include "csrl/nn/tape.hpp"

namespace csrl::dyn {

struct Transition {
  Eigen::VectorXd state, action, next_state;
};

// Frozen input normalization (mean/std of the training inputs).
struct Standardizer {
  Eigen::VectorXd mean, std;

  static Standardizer fit(const std::vector<Eigen::VectorXd>& xs, double std_floor = 1e-6);
  static Standardizer identity(int dim);

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  nn::Var apply_var(nn::Tape& t, nn::Var x) const;
};

// Deterministic surrogate: next state = state + net(standardize(state ++ action)).
class DynModel {
public:
  DynModel() = default;
  DynModel(int state_dim, int action_dim, const std::vector<int>& hidden);

  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }

  Eigen::VectorXd predict(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const;
  nn::Var predict_var(nn::Tape& t, nn::Var state, nn::Var action) const;

  nn::Mlp& net() { return net_; }
  const nn::Mlp& net() const { return net_; }
  Standardizer& standardizer() { return std_; }
  const Standardizer& standardizer() const { return std_; }

private:
  int state_dim_ = 0, action_dim_ = 0;
  nn::Mlp net_;
  Standardizer std_;
};

// (1/N) sum over batch of r^T W r with r the prediction residual and W = diag(w).
double dyn_loss(const DynModel& model, const std::vector<Transition>& batch,
                const Eigen::VectorXd& w);
nn::Var dyn_loss_var(nn::Tape& t, const DynModel& model, const std::vector<Transition>& batch,
                     const Eigen::VectorXd& w);

struct RolloutResult {
  std::vector<Eigen::VectorXd> states;   // s_1 .. s_K (s_0 not included)
  std::vector<Eigen::VectorXd> actions;  // a_0 .. a_{K-1}
};

// Closed-loop surrogate rollout. The policy sees observations reconstructed
// from the predicted state; t0 is the step index of s0 (moving-obstacle
// features depend on it). Throws std::runtime_error when the predicted state
// leaves the ||s|| <= 1e6 ball.
using PolicyFn = std::function<Eigen::VectorXd(const Eigen::VectorXd& obs)>;
RolloutResult rollout(const DynModel& model, const PolicyFn& policy, const env::Env& env,
                      const Eigen::VectorXd& s0, int K, int t0 = 0);

// Differentiable version; the policy maps an observation Var to an action Var
// on the same tape. Gradients flow to whatever parameters the callbacks touch.
using PolicyVarFn = std::function<nn::Var(nn::Tape& t, nn::Var obs)>;
std::vector<nn::Var> rollout_var(nn::Tape& t, const DynModel& model, const PolicyVarFn& policy,
                                 const env::Env& env, nn::Var s0, int K, int t0 = 0,
                                 std::vector<nn::Var>* actions_out = nullptr);

constexpr double kRolloutDivergence = 1e6;

}  // namespace csrl::dyn
