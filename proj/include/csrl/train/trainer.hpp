#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "csrl/conformal/conformal.hpp"
#include "csrl/dyn/model.hpp"
#include "csrl/env/env.hpp"
#include "csrl/nn/mlp.hpp"
#include "csrl/rl/ppo.hpp"
#include "csrl/safety/loss.hpp"

namespace csrl::train {

struct TrainConfig {
  std::string env_name = "cartpole";
  std::uint64_t seed = 0;

  long total_interactions = 1'000'000;  // includes dynamics pretraining
  long pretrain_transitions = 50'000;
  int pretrain_epochs = 50;
  int steps_per_epoch = 4096;

  int k0 = 5;        // initial certified-safety horizon
  int e_force = 20;  // forced horizon increment period (epochs)
  int n0 = 64;       // frozen initial-state set size

  double w1 = 1.0, w2 = 0.5, w3 = 1.0;  // joint-step weights: RL / conformal / safety
  safety::SafetyLossConfig safety;       // w_max 0.5 / w_improve 1.0

  double alpha = 0.1;
  double gamma = 0.98, gae_lambda = 0.97, clip = 0.2;
  int ppo_epochs = 4, minibatch = 256;
  int dyn_passes = 3;  // dataset passes per epoch for the dynamics update

  double entropy_coef_start = 1e-3, entropy_coef_end = 0.0;
  double log_std_start = -0.5, log_std_end = -2.0;

  double lambda_init = 1.0, lambda_step = 0.01;
  double conf_c = 1e-6, conf_temp = 10.0;
  double radius_scale_factor = 4.0;  // times the one-step error scale

  std::vector<int> hidden{12, 12};  // shared by all four networks

  nn::LrSchedule lr_actor{nn::ScheduleKind::CosineDecay, 8e-4, 4e-5, 0};
  nn::LrSchedule lr_critic{nn::ScheduleKind::LinearDecay, 1e-3, 0.0, 0};
  nn::LrSchedule lr_dyn{nn::ScheduleKind::LinearDecay, 8e-4, 0.0, 0};
  nn::LrSchedule lr_unc{nn::ScheduleKind::CosineDecay, 8e-4, 4e-5, 0};

  void validate() const;  // throws std::invalid_argument
};

// Hyperparameter defaults per environment (hidden sizes, interaction budget).
TrainConfig default_train_config(const std::string& env_name);

struct AgentBundle {
  rl::PolicyNet policy;
  nn::Mlp critic;
  dyn::DynModel model;
  conformal::UncertaintyNet unc;

  nn::AdamState opt_actor, opt_log_std, opt_critic, opt_dyn, opt_unc;
  long actor_updates = 0, critic_updates = 0, dyn_updates = 0, unc_updates = 0;

  double lambda = 1.0;
  int k_e = 5;
  int epoch = 0;
  long interactions = 0;
  Rng rng{0};
  std::vector<Eigen::VectorXd> d0;
  Eigen::VectorXd rho_one_step;  // per-dim one-step error scale from pretraining
};

struct EpochReport {
  int epoch = 0;
  int k_e = 0;
  long steps = 0;
  long interactions = 0;
  double l_dyn = 0.0, l_critic = 0.0, l_actor = 0.0;
  double l_eff = 0.0, l_cov = 0.0, l_conf = 0.0;
  double l_safety_max = 0.0, l_safety_improve = 0.0;
  double c_emp = 0.0;
  double lambda = 0.0;
  double mean_ep_reward = 0.0, mean_ep_cost_rate = 0.0;
  bool aborted = false;

  static std::string csv_header();
  std::string csv_row() const;
};

struct PretrainReport {
  std::vector<double> heldout_losses;  // per pretraining epoch
  double final_max_error = 0.0;        // held-out one-step max-norm error
};

// Algorithm driver: pretraining, per-epoch updates, curriculum.
class Trainer {
public:
  explicit Trainer(TrainConfig cfg);

  const TrainConfig& config() const { return cfg_; }
  const env::Env& environment() const { return env_; }
  AgentBundle& bundle() { return bundle_; }
  const AgentBundle& bundle() const { return bundle_; }

  int planned_epochs() const { return planned_epochs_; }
  bool finished() const { return bundle_.interactions >= cfg_.total_interactions; }

  PretrainReport pretrain();

  // Replaces the agent state (e.g. from a checkpoint) and refreshes the
  // quantities derived from it.
  void restore(AgentBundle b);

  // One full epoch: collect, dynamics update, critic update, joint
  // actor/uncertainty step, multiplier update, coverage, curriculum. On a
  // numerical failure the bundle is restored bit-identically and the report
  // is flagged aborted.
  EpochReport run_epoch();

  // Pretrain (skipped when resuming, i.e. interactions > 0) + epochs until
  // the interaction budget is spent; optional CSV stream receives a header
  // plus one row per epoch. Throws on abort.
  std::vector<EpochReport> run(std::ostream* csv = nullptr, bool csv_header = true);

private:
  struct Collected {
    rl::RolloutBatch batch;
    std::vector<dyn::Transition> transitions;
    double mean_ep_reward = 0.0, mean_ep_cost_rate = 0.0;
  };

  Collected collect(long steps, bool random_actions);
  double epoch_fraction() const;  // training progress in [0, 1]
  Eigen::VectorXd sample_action(const Eigen::VectorXd& obs, bool random_actions);

  TrainConfig cfg_;
  env::Env env_;
  AgentBundle bundle_;
  Eigen::VectorXd phi_;  // criticality weights for the dynamics loss
  int planned_epochs_ = 0;
};

// Horizon curriculum: +1 when the epoch certified safety with target coverage
// or on the forced period, at most one increment per epoch.
int curriculum_update(int k_e, int epoch, int e_force, double l_safety_max, double c_emp,
                      double alpha);

}  // namespace csrl::train
