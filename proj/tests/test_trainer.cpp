#include <doctest.h>

#include <cmath>
#include <sstream>

#include "csrl/train/trainer.hpp"

using namespace csrl;
using namespace csrl::train;

namespace {

// Small config that keeps a full epoch under a second.
TrainConfig tiny_config(std::uint64_t seed = 0) {
  TrainConfig c;
  c.env_name = "cartpole";
  c.seed = seed;
  c.total_interactions = 3000;
  c.pretrain_transitions = 1000;
  c.pretrain_epochs = 10;
  c.steps_per_epoch = 512;
  c.minibatch = 128;
  c.n0 = 8;
  c.k0 = 2;
  c.hidden = {8, 8};
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_THROWS(TrainConfig{.env_name = "no_such_env"}.validate());
  TrainConfig c = tiny_config();
  c.pretrain_transitions = c.total_interactions + 1;
  CHECK_THROWS(c.validate());
  c = tiny_config();
  c.alpha = 1.5;
  CHECK_THROWS(c.validate());
  c = tiny_config();
  c.hidden.clear();
  CHECK_THROWS(c.validate());
  CHECK_NOTHROW(tiny_config().validate());
}

TEST_CASE("per-environment defaults") {
  TrainConfig cp = default_train_config("cartpole");
  CHECK(cp.total_interactions == 1'000'000);
  CHECK(cp.hidden == std::vector<int>{12, 12});
  TrainConfig lf = default_train_config("lanefollow");
  CHECK(lf.total_interactions == 60'000);
  TrainConfig q2 = default_train_config("quad2d");
  CHECK(q2.total_interactions == 300'000);
  CHECK(q2.hidden == std::vector<int>{256, 256, 256});
  CHECK(default_train_config("quad2d_nl").hidden == std::vector<int>{256, 256});
  CHECK_THROWS(default_train_config("bogus"));
}

TEST_CASE("zero pretraining budget is a no-op") {
  TrainConfig c = tiny_config();
  c.pretrain_transitions = 0;
  Trainer tr(c);
  Eigen::VectorXd before = tr.bundle().model.net().params();
  PretrainReport rep = tr.pretrain();
  CHECK(rep.heldout_losses.empty());
  CHECK(tr.bundle().interactions == 0);
  CHECK(tr.bundle().model.net().params() == before);
}

TEST_CASE("pretraining drives the held-out dynamics loss down") {
  TrainConfig c = tiny_config(11);
  c.pretrain_transitions = 5000;
  c.total_interactions = 6000;
  c.pretrain_epochs = 40;
  Trainer tr(c);
  PretrainReport rep = tr.pretrain();
  REQUIRE(rep.heldout_losses.size() == 40);
  CHECK(rep.heldout_losses.back() <= 0.1 * rep.heldout_losses.front());
  CHECK(tr.bundle().interactions == 5000);

  // error scales and radius caps come out of the held-out split
  const auto& b = tr.bundle();
  REQUIRE(b.rho_one_step.size() == 4);
  CHECK((b.rho_one_step.array() > 0.0).all());
  CHECK(b.unc.radius_scale == (4.0 * b.rho_one_step).eval());
  CHECK(rep.final_max_error < 1.0);
  // the radius-net input normalization is shared with the surrogate model
  CHECK(b.unc.input_std.mean == b.model.standardizer().mean);
}

TEST_CASE("epoch accounting hits the interaction budget exactly") {
  TrainConfig c = tiny_config(2);
  c.total_interactions = 2000;
  c.pretrain_transitions = 600;
  Trainer tr(c);
  CHECK(tr.planned_epochs() == 3);  // 512 + 512 + 376
  std::ostringstream csv;
  auto reports = tr.run(&csv);
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].steps == 512);
  CHECK(reports[1].steps == 512);
  CHECK(reports[2].steps == 376);
  CHECK(reports.back().interactions == 2000);
  CHECK(tr.finished());

  // CSV: header plus one row per epoch
  std::string line;
  std::istringstream in(csv.str());
  std::getline(in, line);
  CHECK(line == EpochReport::csv_header());
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("identical seeds give identical runs") {
  TrainConfig c = tiny_config(7);
  Trainer a(c), b(c);
  std::ostringstream csv_a, csv_b;
  auto ra = a.run(&csv_a);
  auto rb = b.run(&csv_b);
  CHECK(csv_a.str() == csv_b.str());
  REQUIRE(ra.size() == rb.size());
  CHECK(a.bundle().policy.mean_net.params() == b.bundle().policy.mean_net.params());
  CHECK(a.bundle().unc.net.params() == b.bundle().unc.net.params());
  CHECK(a.bundle().rng.raw_state() == b.bundle().rng.raw_state());
}

TEST_CASE("zero conformal/safety weights freeze the radius net") {
  TrainConfig c = tiny_config(4);
  c.w2 = 0.0;
  c.w3 = 0.0;
  Trainer tr(c);
  tr.pretrain();
  Eigen::VectorXd unc_before = tr.bundle().unc.net.params();
  Eigen::VectorXd pol_before = tr.bundle().policy.mean_net.params();
  EpochReport rep = tr.run_epoch();
  REQUIRE_FALSE(rep.aborted);
  CHECK(tr.bundle().unc.net.params() == unc_before);
  CHECK(tr.bundle().policy.mean_net.params() != pol_before);
}

TEST_CASE("default weights move both policy and radius net") {
  TrainConfig c = tiny_config(4);
  Trainer tr(c);
  tr.pretrain();
  Eigen::VectorXd unc_before = tr.bundle().unc.net.params();
  Eigen::VectorXd model_before = tr.bundle().model.net().params();
  EpochReport rep = tr.run_epoch();
  REQUIRE_FALSE(rep.aborted);
  CHECK(tr.bundle().unc.net.params() != unc_before);
  CHECK(tr.bundle().model.net().params() != model_before);
  CHECK(std::isfinite(rep.l_dyn));
  CHECK(rep.l_dyn >= 0.0);
  CHECK(rep.c_emp >= 0.0);
  CHECK(rep.c_emp <= 1.0);
}

TEST_CASE("huge radii give full hard coverage") {
  TrainConfig c = tiny_config(5);
  Trainer tr(c);
  tr.pretrain();
  tr.bundle().unc.radius_scale = Eigen::VectorXd::Constant(4, 1e9);
  EpochReport rep = tr.run_epoch();
  REQUIRE_FALSE(rep.aborted);
  CHECK(rep.c_emp == 1.0);
}

TEST_CASE("curriculum rules") {
  // certified: negative worst margin with target coverage
  CHECK(curriculum_update(5, 3, 20, -0.1, 0.95, 0.1) == 6);
  // coverage short of 1 - alpha: no increment
  CHECK(curriculum_update(5, 3, 20, -0.1, 0.85, 0.1) == 5);
  // positive margin: no increment
  CHECK(curriculum_update(5, 3, 20, 0.2, 0.99, 0.1) == 5);
  // forced every e_force epochs regardless
  CHECK(curriculum_update(5, 19, 20, 0.2, 0.0, 0.1) == 6);
  // at most one increment per epoch
  CHECK(curriculum_update(5, 19, 20, -0.1, 0.99, 0.1) == 6);
}

TEST_CASE("horizon grows monotonically and at most once per epoch") {
  TrainConfig c = tiny_config(6);
  c.total_interactions = 3000;
  c.e_force = 2;  // force increments so the bound is exercised
  Trainer tr(c);
  auto reports = tr.run();
  int prev = c.k0;
  for (const auto& r : reports) {
    CHECK(r.k_e >= prev);
    CHECK(r.k_e <= c.k0 + r.epoch);
    prev = r.k_e;
  }
  CHECK(tr.bundle().k_e > c.k0);  // at least one forced increment over 4 epochs
}

TEST_CASE("numerical failure rolls the agent back bit-identically") {
  TrainConfig c = tiny_config(8);
  Trainer tr(c);
  tr.pretrain();
  // poison the critic so the first update step sees non-finite gradients
  tr.bundle().critic.params().setConstant(std::nan(""));
  Eigen::VectorXd pol = tr.bundle().policy.mean_net.params();
  Eigen::VectorXd dynp = tr.bundle().model.net().params();
  std::uint64_t rng_state = tr.bundle().rng.raw_state();
  long inter = tr.bundle().interactions;

  EpochReport rep = tr.run_epoch();
  CHECK(rep.aborted);
  CHECK(tr.bundle().policy.mean_net.params() == pol);
  CHECK(tr.bundle().model.net().params() == dynp);
  CHECK(tr.bundle().rng.raw_state() == rng_state);
  CHECK(tr.bundle().interactions == inter);
  CHECK(tr.bundle().epoch == 0);
  CHECK(std::isnan(tr.bundle().critic.params()[0]));  // snapshot includes the poison
}
