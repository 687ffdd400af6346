#include "csrl/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace csrl::train {

namespace {

double lerp(double a, double b, double frac) { return a + (b - a) * std::clamp(frac, 0.0, 1.0); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(idx[i], idx[static_cast<int>(rng.next_u64() % (i + 1))]);
  return idx;
}

Eigen::VectorXd per_dim_quantile_abs(const std::vector<Eigen::VectorXd>& errs, double pct,
                                     double floor) {
  const int n = static_cast<int>(errs.front().size());
  Eigen::VectorXd out(n);
  std::vector<double> vals(errs.size());
  for (int d = 0; d < n; ++d) {
    for (std::size_t i = 0; i < errs.size(); ++i) vals[i] = std::abs(errs[i][d]);
    std::size_t k = std::min(std::max<std::size_t>(
                                 static_cast<std::size_t>(std::ceil(pct * vals.size())), 1),
                             vals.size());
    std::nth_element(vals.begin(), vals.begin() + (k - 1), vals.end());
    out[d] = std::max(vals[k - 1], floor);
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  env::env_tag_from_name(env_name);  // throws on unknown env
  if (total_interactions <= 0 || steps_per_epoch <= 0 || minibatch <= 0 || n0 <= 0 ||
      k0 < 1 || e_force < 1 || ppo_epochs < 1 || dyn_passes < 0)
    throw std::invalid_argument("TrainConfig: non-positive size parameter");
  if (pretrain_transitions < 0 || pretrain_transitions > total_interactions)
    throw std::invalid_argument("TrainConfig: pretraining exceeds the interaction budget");
  if (w1 < 0 || w2 < 0 || w3 < 0 || safety.w_max < 0 || safety.w_improve < 0)
    throw std::invalid_argument("TrainConfig: negative loss weight");
  if (alpha <= 0 || alpha >= 1) throw std::invalid_argument("TrainConfig: alpha out of (0,1)");
  if (hidden.empty()) throw std::invalid_argument("TrainConfig: empty hidden sizes");
}

TrainConfig default_train_config(const std::string& env_name) {
  TrainConfig c;
  c.env_name = env_name;
  switch (env::env_tag_from_name(env_name)) {
    case env::EnvTag::CartPole:
      c.total_interactions = 1'000'000;
      c.pretrain_transitions = 50'000;
      c.hidden = {12, 12};
      break;
    case env::EnvTag::LaneFollow:
      c.total_interactions = 60'000;
      c.pretrain_transitions = 10'000;
      c.hidden = {12, 12};
      break;
    case env::EnvTag::Quad2D:
      c.total_interactions = 300'000;
      c.pretrain_transitions = 50'000;
      c.hidden = {256, 256, 256};
      break;
    case env::EnvTag::Quad3D:
      c.total_interactions = 300'000;
      c.pretrain_transitions = 50'000;
      c.hidden = {256, 256, 256};
      break;
    case env::EnvTag::Quad2DNl:
      c.total_interactions = 300'000;
      c.pretrain_transitions = 50'000;
      c.hidden = {256, 256};
      break;
  }
  return c;
}

std::string EpochReport::csv_header() {
  return "epoch,k_e,steps,interactions,l_dyn,l_critic,l_actor,l_eff,l_cov,l_conf,"
         "l_safety_max,l_safety_improve,c_emp,lambda,mean_ep_reward,mean_ep_cost_rate";
}

std::string EpochReport::csv_row() const {
  std::string s = std::to_string(epoch) + "," + std::to_string(k_e) + "," +
                  std::to_string(steps) + "," + std::to_string(interactions);
  for (double v : {l_dyn, l_critic, l_actor, l_eff, l_cov, l_conf, l_safety_max,
                   l_safety_improve, c_emp, lambda, mean_ep_reward, mean_ep_cost_rate})
    s += "," + fmt(v);
  return s;
}

int curriculum_update(int k_e, int epoch, int e_force, double l_safety_max, double c_emp,
                      double alpha) {
  const bool certified = l_safety_max < 0.0 && c_emp >= 1.0 - alpha;
  const bool forced = (epoch + 1) % e_force == 0;
  return k_e + ((certified || forced) ? 1 : 0);
}

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)), env_(env::Env::make(cfg_.env_name)) {
  cfg_.validate();
  const int s = env_.state_dim(), a = env_.action_dim(), o = env_.obs_dim();

  bundle_.rng = Rng(cfg_.seed);
  bundle_.policy = rl::PolicyNet(o, a, cfg_.hidden, cfg_.log_std_start);
  std::vector<int> critic_sizes;
  critic_sizes.push_back(o);
  critic_sizes.insert(critic_sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  critic_sizes.push_back(1);
  bundle_.critic = nn::Mlp(critic_sizes, nn::Act::Linear);
  bundle_.model = dyn::DynModel(s, a, cfg_.hidden);
  bundle_.unc = conformal::UncertaintyNet(s, a, cfg_.hidden);

  bundle_.policy.mean_net.init_uniform(bundle_.rng);
  bundle_.critic.init_uniform(bundle_.rng);
  bundle_.model.net().init_uniform(bundle_.rng);
  bundle_.unc.net.init_uniform(bundle_.rng);

  bundle_.opt_actor = nn::AdamState(bundle_.policy.mean_net.param_count());
  bundle_.opt_log_std = nn::AdamState(a);
  bundle_.opt_critic = nn::AdamState(bundle_.critic.param_count());
  bundle_.opt_dyn = nn::AdamState(bundle_.model.net().param_count());
  bundle_.opt_unc = nn::AdamState(bundle_.unc.net.param_count());

  bundle_.lambda = cfg_.lambda_init;
  bundle_.k_e = cfg_.k0;
  bundle_.d0 = safety::make_init_set(env_, cfg_.n0, bundle_.rng);
  phi_ = safety::phi_weights(env_.safety_spec(), bundle_.d0);

  const long epoch_budget = cfg_.total_interactions - cfg_.pretrain_transitions;
  planned_epochs_ = static_cast<int>((epoch_budget + cfg_.steps_per_epoch - 1) /
                                     cfg_.steps_per_epoch);

  const long mb_per_pass = (cfg_.steps_per_epoch + cfg_.minibatch - 1) / cfg_.minibatch;
  auto fill = [&](nn::LrSchedule& sch, long total) {
    if (sch.total_steps == 0) sch.total_steps = std::max<long>(total, 1);
  };
  fill(cfg_.lr_actor, planned_epochs_ * cfg_.ppo_epochs * (mb_per_pass + 1));
  fill(cfg_.lr_unc, planned_epochs_ * cfg_.ppo_epochs * (mb_per_pass + 1));
  fill(cfg_.lr_critic, planned_epochs_ * cfg_.ppo_epochs * mb_per_pass);
  const long pretrain_mb =
      cfg_.pretrain_epochs * ((cfg_.pretrain_transitions * 9 / 10) / cfg_.minibatch + 1);
  fill(cfg_.lr_dyn, pretrain_mb + planned_epochs_ * cfg_.dyn_passes * mb_per_pass);
}

void Trainer::restore(AgentBundle b) {
  bundle_ = std::move(b);
  phi_ = safety::phi_weights(env_.safety_spec(), bundle_.d0);
}

double Trainer::epoch_fraction() const {
  if (planned_epochs_ <= 1) return 1.0;
  return static_cast<double>(bundle_.epoch) / static_cast<double>(planned_epochs_ - 1);
}

Eigen::VectorXd Trainer::sample_action(const Eigen::VectorXd& obs, bool random_actions) {
  if (random_actions) {
    Eigen::VectorXd a(env_.action_dim());
    for (int j = 0; j < a.size(); ++j) a[j] = bundle_.rng.uniform(-1.0, 1.0);
    return a;
  }
  return bundle_.policy.sample(obs, bundle_.rng);
}

Trainer::Collected Trainer::collect(long steps, bool random_actions) {
  Collected out;
  rl::RolloutBatch& b = out.batch;
  double total_reward = 0.0;
  long total_cost = 0;
  int episodes = 0;

  long done = 0;
  while (done < steps) {
    Eigen::VectorXd s = env_.reset(bundle_.rng);
    ++episodes;
    for (int t = 0; t < env_.config().max_steps && done < steps; ++t, ++done) {
      Eigen::VectorXd obs = env_.observe(s, t);
      Eigen::VectorXd a = sample_action(obs, random_actions);
      Eigen::VectorXd a_exec = a.cwiseMax(-1.0).cwiseMin(1.0);
      env::StepResult r = env_.step(s, a_exec, t);

      out.transitions.push_back({s, a_exec, r.state});
      b.obs.push_back(std::move(obs));
      b.log_probs_old.push_back(bundle_.policy.log_prob(b.obs.back(), a));
      b.actions.push_back(std::move(a));
      b.rewards.push_back(r.reward);
      b.costs.push_back(static_cast<double>(r.cost));
      b.values.push_back(bundle_.critic.forward(b.obs.back())[0]);
      const bool truncated = !r.terminated && (t + 1 == env_.config().max_steps ||
                                               done + 1 == steps);
      b.next_values.push_back(r.terminated ? 0.0 : bundle_.critic.forward(r.obs)[0]);
      b.terminal.push_back(r.terminated);
      b.episode_end.push_back(r.terminated || truncated);

      total_reward += r.reward;
      total_cost += r.cost;
      ++bundle_.interactions;
      if (r.terminated) {
        ++done;
        break;
      }
      s = std::move(r.state);
    }
  }
  out.mean_ep_reward = total_reward / std::max(episodes, 1);
  out.mean_ep_cost_rate = static_cast<double>(total_cost) / static_cast<double>(b.size());
  return out;
}

PretrainReport Trainer::pretrain() {
  PretrainReport rep;
  if (cfg_.pretrain_transitions == 0) return rep;
  Collected col = collect(cfg_.pretrain_transitions, true);
  auto& data = col.transitions;

  const int n = static_cast<int>(data.size());
  const int n_train = std::max(1, n * 9 / 10);
  std::vector<dyn::Transition> train_split(data.begin(), data.begin() + n_train);
  std::vector<dyn::Transition> held(data.begin() + n_train, data.end());
  if (held.empty()) held = train_split;

  std::vector<Eigen::VectorXd> inputs;
  inputs.reserve(train_split.size());
  for (const auto& tr : train_split) {
    Eigen::VectorXd x(tr.state.size() + tr.action.size());
    x << tr.state, tr.action;
    inputs.push_back(std::move(x));
  }
  bundle_.model.standardizer() = dyn::Standardizer::fit(inputs);
  bundle_.unc.input_std = bundle_.model.standardizer();

  for (int epoch = 0; epoch < cfg_.pretrain_epochs; ++epoch) {
    std::vector<int> idx = shuffled_indices(n_train, bundle_.rng);
    for (int start = 0; start < n_train; start += cfg_.minibatch) {
      std::vector<dyn::Transition> mb;
      for (int i = start; i < std::min(start + cfg_.minibatch, n_train); ++i)
        mb.push_back(train_split[idx[i]]);
      bundle_.model.net().zero_grad();
      nn::Tape t;
      t.backward(dyn::dyn_loss_var(t, bundle_.model, mb, phi_));
      nn::adam_step(bundle_.model.net().params(), bundle_.model.net().grads(), bundle_.opt_dyn,
                    cfg_.lr_dyn.lr(bundle_.dyn_updates++));
    }
    rep.heldout_losses.push_back(dyn::dyn_loss(bundle_.model, held, phi_));
  }

  std::vector<Eigen::VectorXd> errs;
  errs.reserve(held.size());
  double max_err = 0.0;
  for (const auto& tr : held) {
    Eigen::VectorXd e = bundle_.model.predict(tr.state, tr.action) - tr.next_state;
    max_err = std::max(max_err, e.cwiseAbs().maxCoeff());
    errs.push_back(std::move(e));
  }
  rep.final_max_error = max_err;
  bundle_.rho_one_step = per_dim_quantile_abs(errs, 0.9, 1e-6);
  bundle_.unc.radius_scale = cfg_.radius_scale_factor * bundle_.rho_one_step;
  return rep;
}

EpochReport Trainer::run_epoch() {
  const AgentBundle snapshot = bundle_;
  EpochReport rep;
  rep.epoch = bundle_.epoch;
  rep.k_e = bundle_.k_e;

  try {
    const long remaining = cfg_.total_interactions - bundle_.interactions;
    const long steps = std::min<long>(cfg_.steps_per_epoch, remaining);
    if (steps <= 0) throw std::logic_error("run_epoch: interaction budget exhausted");
    const double frac = epoch_fraction();

    // (i) collect on-policy data (uniform random actions on the first epoch)
    Collected col = collect(steps, bundle_.epoch == 0);
    rep.steps = steps;
    rep.mean_ep_reward = col.mean_ep_reward;
    rep.mean_ep_cost_rate = col.mean_ep_cost_rate;
    const int n = col.batch.size();

    // (ii) dynamics fine-tuning on the fresh dataset
    for (int pass = 0; pass < cfg_.dyn_passes; ++pass) {
      std::vector<int> idx = shuffled_indices(n, bundle_.rng);
      for (int start = 0; start < n; start += cfg_.minibatch) {
        std::vector<dyn::Transition> mb;
        for (int i = start; i < std::min(start + cfg_.minibatch, n); ++i)
          mb.push_back(col.transitions[idx[i]]);
        bundle_.model.net().zero_grad();
        nn::Tape t;
        t.backward(dyn::dyn_loss_var(t, bundle_.model, mb, phi_));
        nn::adam_step(bundle_.model.net().params(), bundle_.model.net().grads(),
                      bundle_.opt_dyn, cfg_.lr_dyn.lr(bundle_.dyn_updates++));
      }
    }
    rep.l_dyn = dyn::dyn_loss(bundle_.model, col.transitions, phi_);

    // (iii) critic update on GAE returns
    rl::gae_advantages(col.batch, cfg_.gamma, cfg_.gae_lambda);
    rl::normalize_advantages(col.batch);
    double critic_loss_acc = 0.0;
    long critic_batches = 0;
    for (int pass = 0; pass < cfg_.ppo_epochs; ++pass) {
      std::vector<int> idx = shuffled_indices(n, bundle_.rng);
      for (int start = 0; start < n; start += cfg_.minibatch) {
        nn::Tape t;
        nn::Var loss = t.scalar(0.0);
        const int end = std::min(start + cfg_.minibatch, n);
        for (int i = start; i < end; ++i) {
          nn::Var v = bundle_.critic.apply(t, t.leaf(col.batch.obs[idx[i]]));
          nn::Var err = nn::add_const(t, v, -col.batch.returns[idx[i]]);
          loss = nn::add(t, loss, nn::vdot(t, err, err));
        }
        loss = nn::scale(t, loss, 1.0 / (end - start));
        critic_loss_acc += t.sval(loss);
        ++critic_batches;
        bundle_.critic.zero_grad();
        t.backward(loss);
        nn::adam_step(bundle_.critic.params(), bundle_.critic.grads(), bundle_.opt_critic,
                      cfg_.lr_critic.lr(bundle_.critic_updates++));
      }
    }
    rep.l_critic = critic_loss_acc / std::max<long>(critic_batches, 1);

    // (iv) joint actor + radius-net step on the weighted objective
    const double entropy_coef = lerp(cfg_.entropy_coef_start, cfg_.entropy_coef_end, frac);
    double actor_acc = 0.0, eff_acc = 0.0, cov_acc = 0.0, conf_acc = 0.0;
    long joint_batches = 0;
    double safety_max = 0.0, safety_improve = 0.0;
    for (int pass = 0; pass < cfg_.ppo_epochs; ++pass) {
      std::vector<int> idx = shuffled_indices(n, bundle_.rng);
      for (int start = 0; start < n; start += cfg_.minibatch) {
        const int end = std::min(start + cfg_.minibatch, n);
        std::vector<int> mb_idx(idx.begin() + start, idx.begin() + end);
        std::vector<dyn::Transition> mb;
        mb.reserve(mb_idx.size());
        for (int i : mb_idx) mb.push_back(col.transitions[i]);

        bundle_.policy.zero_grad();
        bundle_.unc.net.zero_grad();
        nn::Tape t;
        rl::RlLosses rll = rl::rl_losses(t, bundle_.policy, bundle_.critic, col.batch, mb_idx,
                                         cfg_.clip, entropy_coef);
        conformal::ConformalLosses cl =
            conformal::conformal_losses(t, bundle_.unc, bundle_.model, mb, cfg_.alpha,
                                        bundle_.lambda, cfg_.conf_c, cfg_.conf_temp);
        nn::Var total =
            nn::add(t, nn::scale(t, rll.actor, cfg_.w1), nn::scale(t, cl.total, cfg_.w2));
        t.backward(total);

        actor_acc += rll.actor_value;
        eff_acc += cl.l_eff;
        cov_acc += cl.l_cov;
        conf_acc += cl.l_conf;
        ++joint_batches;

        const double lr_a = cfg_.lr_actor.lr(bundle_.actor_updates);
        const double lr_u = cfg_.lr_unc.lr(bundle_.unc_updates);
        nn::adam_step(bundle_.policy.mean_net.params(), bundle_.policy.mean_net.grads(),
                      bundle_.opt_actor, cfg_.w1 > 0 ? lr_a : 0.0);
        nn::adam_step(bundle_.policy.log_std, bundle_.policy.log_std_grad, bundle_.opt_log_std,
                      cfg_.w1 > 0 ? lr_a : 0.0);
        nn::adam_step(bundle_.unc.net.params(), bundle_.unc.net.grads(), bundle_.opt_unc, lr_u);
        ++bundle_.actor_updates;
        ++bundle_.unc_updates;
      }

      // one full-initial-set reachability step per optimization pass
      bundle_.policy.zero_grad();
      bundle_.unc.net.zero_grad();
      bundle_.model.net().zero_grad();
      nn::Tape t;
      safety::SafetyLossResult sl = safety::safety_loss(t, bundle_.policy, bundle_.model,
                                                        bundle_.unc, env_, bundle_.d0,
                                                        bundle_.k_e, cfg_.safety);
      safety_max = sl.l_max;
      safety_improve = sl.l_improve;
      if (!sl.diverged && cfg_.w3 > 0) {
        t.backward(nn::scale(t, sl.total, cfg_.w3));
        nn::adam_step(bundle_.policy.mean_net.params(), bundle_.policy.mean_net.grads(),
                      bundle_.opt_actor, cfg_.lr_actor.lr(bundle_.actor_updates));
        nn::adam_step(bundle_.unc.net.params(), bundle_.unc.net.grads(), bundle_.opt_unc,
                      cfg_.lr_unc.lr(bundle_.unc_updates));
      }
      ++bundle_.actor_updates;
      ++bundle_.unc_updates;
      bundle_.model.net().zero_grad();  // dynamics stay fixed in the joint step
    }
    rep.l_actor = actor_acc / std::max<long>(joint_batches, 1);
    rep.l_eff = eff_acc / std::max<long>(joint_batches, 1);
    rep.l_cov = cov_acc / std::max<long>(joint_batches, 1);
    rep.l_conf = conf_acc / std::max<long>(joint_batches, 1);
    rep.l_safety_max = safety_max;
    rep.l_safety_improve = safety_improve;

    // exploration decay: scheduled ceiling on the learnable log stds
    const double ceiling = lerp(cfg_.log_std_start, cfg_.log_std_end, frac);
    bundle_.policy.log_std = bundle_.policy.log_std.cwiseMin(ceiling);

    // (v) multiplier ascent, once per epoch
    bundle_.lambda = conformal::lambda_update(bundle_.lambda, rep.l_cov, cfg_.lambda_step);

    // (vi) hard-indicator coverage on the epoch dataset
    rep.c_emp = conformal::hard_coverage(bundle_.unc, bundle_.model, col.transitions);

    bundle_.k_e = curriculum_update(bundle_.k_e, bundle_.epoch, cfg_.e_force, rep.l_safety_max,
                                    rep.c_emp, cfg_.alpha);
    ++bundle_.epoch;
    rep.interactions = bundle_.interactions;
    rep.lambda = bundle_.lambda;
  } catch (const std::exception&) {
    bundle_ = snapshot;
    rep.aborted = true;
    rep.interactions = bundle_.interactions;
    rep.lambda = bundle_.lambda;
  }
  return rep;
}

std::vector<EpochReport> Trainer::run(std::ostream* csv, bool csv_header) {
  if (bundle_.interactions == 0) pretrain();
  if (csv && csv_header) *csv << EpochReport::csv_header() << "\n";
  std::vector<EpochReport> reports;
  while (!finished()) {
    EpochReport rep = run_epoch();
    if (rep.aborted)
      throw std::runtime_error("training aborted: numerical failure in epoch " +
                               std::to_string(rep.epoch));
    if (csv) *csv << rep.csv_row() << "\n";
    reports.push_back(rep);
  }
  return reports;
}

}  // namespace csrl::train
