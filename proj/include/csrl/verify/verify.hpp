#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "csrl/conformal/conformal.hpp"
#include "csrl/dyn/model.hpp"
#include "csrl/env/env.hpp"
#include "csrl/rl/ppo.hpp"
#include "csrl/rng.hpp"

namespace csrl::verify {

// Exact concentration bound on the trajectory-safety probability:
// (V_count/N - sqrt(ln(2/delta)/(2N))) * (1-alpha) * (1-delta).
// Throws std::invalid_argument on N = 0 or alpha/delta outside (0,1).
double hoeffding_bound(long v_count, long n, double delta, double alpha);

struct VerifyConfig {
  double alpha = 0.1;
  double delta = 0.05;
  int k_max = 20;
  int n_cal = 1000;  // calibration trajectories (time-series mode: n_opt of them
                     // tune the weights, the rest feed the quantile)
  int n_opt = 100;
  int n_ver = 2000;  // fresh initial states scored against the regions
  int n_rho = 100;   // dedicated split for the score normalizers
  std::vector<conformal::Mode> modes{conformal::Mode::Union, conformal::Mode::TimeSeries};
  std::uint64_t seed = 0;
  std::string checkpoint_id;
};

struct VerificationRow {
  int K = 0;
  conformal::Mode mode = conformal::Mode::Union;
  long v_count = 0;
  long n = 0;
  double empirical_safe_fraction = 0.0;
  double hoeffding_term = 0.0;
  double lower_bound = -1.0;
  bool infeasible = false;
};

struct VerificationReport {
  double alpha = 0.1, delta = 0.05;
  std::uint64_t seed = 0;
  std::string checkpoint_id;
  std::vector<VerificationRow> rows;  // one per (K, mode), K major

  static std::string csv_header();
  std::string to_csv() const;
  nlohmann::json to_json() const;
  std::string to_svg() const;  // line chart: lower bound vs K, one line per mode
};

// Calibrates conformal regions per horizon and counts verification rollouts
// whose every reachable box avoids the unsafe set. All trajectory sets are
// drawn from independent streams of cfg.seed and are disjoint by construction;
// the policy acts deterministically (mean action).
VerificationReport verify(const rl::PolicyNet& policy, const dyn::DynModel& model,
                          const env::Env& env, const VerifyConfig& cfg);

struct EvalStats {
  double mean_reward = 0.0;
  double mean_cost_rate = 0.0;          // violating steps / total steps
  double violation_free_fraction = 0.0; // episodes with zero violations
  int episodes = 0;
  long total_steps = 0;
  std::vector<double> episode_rewards;  // for standard errors

  double reward_stderr() const;  // 0 for a single episode
};

// Monte-Carlo statistics of the deterministic policy on the true environment.
// Episodes end on termination (violation or goal) or after `horizon` steps.
EvalStats empirical_eval(const rl::PolicyNet& policy, const env::Env& env, int n_episodes,
                         int horizon, Rng& rng);

}  // namespace csrl::verify
