#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "csrl/rl/ppo.hpp"
#include "csrl/rng.hpp"
#include "test_util.hpp"

using namespace csrl;
using namespace csrl::rl;

namespace {

RolloutBatch single_step(double reward, double v, double next_v, bool terminal) {
  RolloutBatch b;
  b.obs.push_back(Eigen::VectorXd::Zero(1));
  b.actions.push_back(Eigen::VectorXd::Zero(1));
  b.log_probs_old.push_back(0.0);
  b.rewards.push_back(reward);
  b.costs.push_back(0.0);
  b.values.push_back(v);
  b.next_values.push_back(next_v);
  b.episode_end.push_back(true);
  b.terminal.push_back(terminal);
  return b;
}

}  // namespace

TEST_CASE("gae: one-step TD base case") {
  RolloutBatch b = single_step(1.0, 0.0, 0.0, true);
  gae_advantages(b, 0.98, 0.97);
  CHECK(b.advantages[0] == doctest::Approx(1.0));
  CHECK(b.returns[0] == doctest::Approx(1.0));
}

TEST_CASE("gae: lambda = 0 gives per-step TD errors") {
  Rng rng(1);
  RolloutBatch b;
  const int n = 12;
  for (int i = 0; i < n; ++i) {
    b.obs.push_back(Eigen::VectorXd::Zero(1));
    b.actions.push_back(Eigen::VectorXd::Zero(1));
    b.log_probs_old.push_back(0.0);
    b.rewards.push_back(rng.normal());
    b.costs.push_back(0.0);
    b.values.push_back(rng.normal());
    b.next_values.push_back(rng.normal());
    b.episode_end.push_back(i == n - 1);
    b.terminal.push_back(i == n - 1);
  }
  gae_advantages(b, 0.98, 0.0);
  for (int i = 0; i < n; ++i) {
    double next_v = b.terminal[i] ? 0.0 : b.next_values[i];
    CHECK(b.advantages[i] == doctest::Approx(b.rewards[i] + 0.98 * next_v - b.values[i]));
  }
}

TEST_CASE("gae: lambda = gamma = 1 with zero values gives reward-to-go") {
  RolloutBatch b;
  std::vector<double> rewards{1.0, 2.0, 3.0, 4.0};
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    b.obs.push_back(Eigen::VectorXd::Zero(1));
    b.actions.push_back(Eigen::VectorXd::Zero(1));
    b.log_probs_old.push_back(0.0);
    b.rewards.push_back(rewards[i]);
    b.costs.push_back(0.0);
    b.values.push_back(0.0);
    b.next_values.push_back(0.0);
    b.episode_end.push_back(i == rewards.size() - 1);
    b.terminal.push_back(i == rewards.size() - 1);
  }
  gae_advantages(b, 1.0, 1.0);
  CHECK(b.advantages[0] == doctest::Approx(10.0));
  CHECK(b.advantages[1] == doctest::Approx(9.0));
  CHECK(b.advantages[2] == doctest::Approx(7.0));
  CHECK(b.advantages[3] == doctest::Approx(4.0));
}

TEST_CASE("gae: episode boundary stops the accumulation") {
  RolloutBatch b;
  for (int i = 0; i < 4; ++i) {
    b.obs.push_back(Eigen::VectorXd::Zero(1));
    b.actions.push_back(Eigen::VectorXd::Zero(1));
    b.log_probs_old.push_back(0.0);
    b.rewards.push_back(1.0);
    b.costs.push_back(0.0);
    b.values.push_back(0.0);
    b.next_values.push_back(0.0);
    b.episode_end.push_back(i == 1 || i == 3);  // two 2-step episodes
    b.terminal.push_back(i == 1 || i == 3);
  }
  gae_advantages(b, 1.0, 1.0);
  CHECK(b.advantages[0] == doctest::Approx(2.0));
  CHECK(b.advantages[2] == doctest::Approx(2.0));  // second episode restarts
}

TEST_CASE("normalize_advantages: mean zero, unit scale") {
  RolloutBatch b;
  for (int i = 0; i < 16; ++i) {
    b.advantages.push_back(static_cast<double>(i));
    b.obs.push_back(Eigen::VectorXd::Zero(1));
  }
  normalize_advantages(b);
  double mean = std::accumulate(b.advantages.begin(), b.advantages.end(), 0.0) / 16.0;
  double var = 0.0;
  for (double a : b.advantages) var += (a - mean) * (a - mean);
  CHECK(std::abs(mean) <= 1e-12);
  CHECK(std::sqrt(var / 16.0) == doctest::Approx(1.0).epsilon(1e-6));
}

namespace {

RolloutBatch random_batch(PolicyNet& policy, int n, Rng& rng, int obs_dim) {
  RolloutBatch b;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd obs(obs_dim);
    for (int j = 0; j < obs_dim; ++j) obs[j] = rng.uniform(-1, 1);
    Eigen::VectorXd a = policy.sample(obs, rng);
    b.log_probs_old.push_back(policy.log_prob(obs, a));
    b.obs.push_back(std::move(obs));
    b.actions.push_back(std::move(a));
    b.rewards.push_back(rng.normal());
    b.costs.push_back(0.0);
    b.values.push_back(0.0);
    b.next_values.push_back(0.0);
    b.episode_end.push_back(true);
    b.terminal.push_back(true);
    b.advantages.push_back(rng.normal());
    b.returns.push_back(rng.normal());
  }
  return b;
}

std::vector<int> all_indices(int n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

TEST_CASE("rl_losses: on-policy ratio gives minus mean advantage") {
  Rng rng(3);
  PolicyNet policy(2, 1, {4});
  policy.mean_net.init_uniform(rng);
  nn::Mlp critic({2, 4, 1}, nn::Act::Linear);
  critic.init_uniform(rng);

  RolloutBatch b = random_batch(policy, 10, rng, 2);
  nn::Tape t;
  RlLosses r = rl_losses(t, policy, critic, b, all_indices(10), 0.2, 0.0);
  double mean_adv = std::accumulate(b.advantages.begin(), b.advantages.end(), 0.0) / 10.0;
  CHECK(r.actor_value == doctest::Approx(-mean_adv));
}

TEST_CASE("rl_losses: clip arithmetic at ratio 1.5") {
  Rng rng(4);
  PolicyNet policy(1, 1, {});
  nn::Mlp critic({1, 1}, nn::Act::Linear);

  RolloutBatch b = random_batch(policy, 1, rng, 1);
  b.advantages[0] = 2.0;
  b.log_probs_old[0] = policy.log_prob(b.obs[0], b.actions[0]) - std::log(1.5);
  nn::Tape t;
  RlLosses r = rl_losses(t, policy, critic, b, {0}, 0.2, 0.0);
  // positive advantage, ratio 1.5 -> clipped branch 1.2 * A wins the min
  CHECK(r.actor_value == doctest::Approx(-1.2 * 2.0));
}

TEST_CASE("rl_losses: clip inactive when ratios stay in band") {
  Rng rng(5);
  PolicyNet policy(2, 2, {4});
  policy.mean_net.init_uniform(rng);
  nn::Mlp critic({2, 4, 1}, nn::Act::Linear);
  critic.init_uniform(rng);
  RolloutBatch b = random_batch(policy, 12, rng, 2);  // on-policy: all ratios 1

  nn::Tape t1, t2;
  RlLosses narrow = rl_losses(t1, policy, critic, b, all_indices(12), 0.2, 0.0);
  RlLosses wide = rl_losses(t2, policy, critic, b, all_indices(12), 1e9, 0.0);
  CHECK(narrow.actor_value == doctest::Approx(wide.actor_value));
}

TEST_CASE("rl_losses: perfect critic gives zero critic loss") {
  Rng rng(6);
  nn::Mlp critic({2, 1}, nn::Act::Linear);  // zero params -> predicts 0
  PolicyNet policy(2, 1, {});
  RolloutBatch b = random_batch(policy, 8, rng, 2);
  for (double& ret : b.returns) ret = 0.0;
  nn::Tape t;
  RlLosses r = rl_losses(t, policy, critic, b, all_indices(8), 0.2, 0.0);
  CHECK(r.critic_value == doctest::Approx(0.0));
}

TEST_CASE("rl_losses: entropy matches the closed form") {
  PolicyNet policy(1, 3, {}, -0.5);
  nn::Mlp critic({1, 1}, nn::Act::Linear);
  Rng rng(7);
  RolloutBatch b = random_batch(policy, 2, rng, 1);
  nn::Tape t;
  RlLosses r = rl_losses(t, policy, critic, b, {0, 1}, 0.2, 1e-3);
  double expect = 3.0 * (0.5 * std::log(2.0 * 3.141592653589793 * std::exp(1.0)) - 0.5);
  CHECK(r.entropy == doctest::Approx(expect));
  CHECK(r.entropy == doctest::Approx(policy.entropy()));
}

TEST_CASE("rl_losses: gradients match finite differences") {
  Rng rng(8);
  PolicyNet policy(3, 2, {6});
  policy.mean_net.init_uniform(rng);
  nn::Mlp critic({3, 6, 1}, nn::Act::Linear);
  critic.init_uniform(rng);
  RolloutBatch b = random_batch(policy, 10, rng, 3);
  std::vector<int> idx = all_indices(10);

  policy.zero_grad();
  critic.zero_grad();
  {
    nn::Tape t;
    RlLosses r = rl_losses(t, policy, critic, b, idx, 0.2, 1e-3);
    // one backward per tape; the two losses touch disjoint parameters
    t.backward(nn::add(t, r.actor, r.critic));
  }
  auto actor_loss = [&]() {
    nn::Tape t;
    return rl_losses(t, policy, critic, b, idx, 0.2, 1e-3).actor_value;
  };
  auto critic_loss = [&]() {
    nn::Tape t;
    return rl_losses(t, policy, critic, b, idx, 0.2, 1e-3).critic_value;
  };
  CHECK(max_rel_err(policy.mean_net.grads(),
                    fd_gradient(policy.mean_net.params(), actor_loss)) <= 1e-4);
  CHECK(max_rel_err(policy.log_std_grad, fd_gradient(policy.log_std, actor_loss)) <= 1e-4);
  CHECK(max_rel_err(critic.grads(), fd_gradient(critic.params(), critic_loss)) <= 1e-4);
}

TEST_CASE("ppo moves a 1-D bandit toward the reward peak") {
  std::vector<double> finals;
  for (int seed = 0; seed < 5; ++seed) {
    Rng rng(50 + seed);
    PolicyNet policy(1, 1, {4});
    policy.mean_net.init_uniform(rng);
    nn::Mlp critic({1, 4, 1}, nn::Act::Linear);
    critic.init_uniform(rng);
    nn::AdamState opt_pi(policy.mean_net.param_count());
    nn::AdamState opt_std(1);
    nn::AdamState opt_v(critic.param_count());

    Eigen::VectorXd obs = Eigen::VectorXd::Zero(1);
    for (int epoch = 0; epoch < 200; ++epoch) {
      RolloutBatch b;
      for (int i = 0; i < 64; ++i) {
        Eigen::VectorXd a = policy.sample(obs, rng);
        double r = -(a[0] - 0.5) * (a[0] - 0.5);
        b.obs.push_back(obs);
        b.log_probs_old.push_back(policy.log_prob(obs, a));
        b.actions.push_back(std::move(a));
        b.rewards.push_back(r);
        b.costs.push_back(0.0);
        b.values.push_back(critic.forward(obs)[0]);
        b.next_values.push_back(0.0);
        b.episode_end.push_back(true);
        b.terminal.push_back(true);
      }
      gae_advantages(b, 0.98, 0.97);
      normalize_advantages(b);
      std::vector<int> idx = all_indices(64);
      for (int it = 0; it < 4; ++it) {
        policy.zero_grad();
        critic.zero_grad();
        nn::Tape t;
        RlLosses r = rl_losses(t, policy, critic, b, idx, 0.2, 1e-3);
        t.backward(nn::add(t, r.actor, r.critic));
        nn::adam_step(policy.mean_net.params(), policy.mean_net.grads(), opt_pi, 0.02);
        nn::adam_step(policy.log_std, policy.log_std_grad, opt_std, 0.02);
        nn::adam_step(critic.params(), critic.grads(), opt_v, 0.02);
      }
    }
    finals.push_back(std::abs(policy.mean(obs)[0] - 0.5));
  }
  std::nth_element(finals.begin(), finals.begin() + 2, finals.end());
  CHECK(finals[2] <= 0.1);
}
