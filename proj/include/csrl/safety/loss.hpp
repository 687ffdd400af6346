#pragma once

#include <Eigen/Core>
#include <vector>

#include "csrl/conformal/conformal.hpp"
#include "csrl/dyn/model.hpp"
#include "csrl/env/env.hpp"
#include "csrl/nn/tape.hpp"
#include "csrl/rl/ppo.hpp"
#include "csrl/safety/spec.hpp"

namespace csrl::safety {

struct SafetyLossConfig {
  double w_max = 0.5;
  double w_improve = 1.0;
  // The improvement term as printed in the source formula is g_1 - g_K, whose
  // minimization degrades the final margin; the described intent is the
  // opposite. Default follows the intent (loss = g_K - g_1).
  bool improve_as_described = true;
  double divergence_sentinel = 1e3;
};

struct SafetyLossResult {
  double l_max = 0.0;
  double l_improve = 0.0;
  double value = 0.0;  // w_max * l_max + w_improve * l_improve
  bool diverged = false;
  nn::Var total;  // on the tape; a constant sentinel when diverged
};

// Differentiable reachability losses over surrogate rollouts from the frozen
// initial-state set. The box at step t is centered at the t-step surrogate
// state with radii eta(s_{t-1}, a_{t-1}); the max term takes an exact max
// (subgradient to the argmax) so a negative value certifies every box.
SafetyLossResult safety_loss(nn::Tape& t, const rl::PolicyNet& policy,
                             const dyn::DynModel& model, const conformal::UncertaintyNet& unc,
                             const env::Env& env, const std::vector<Eigen::VectorXd>& init_set,
                             int K_e, const SafetyLossConfig& cfg = {});

// Frozen initial-state dataset: env resets, all safe by construction.
std::vector<Eigen::VectorXd> make_init_set(const env::Env& env, int n0, Rng& rng);

}  // namespace csrl::safety
