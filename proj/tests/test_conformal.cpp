#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "csrl/conformal/conformal.hpp"
#include "csrl/rng.hpp"
#include "test_util.hpp"

using namespace csrl;
using namespace csrl::conformal;

namespace {

double sorted_kth(std::vector<double> v, std::size_t k) {  // 1-based
  std::sort(v.begin(), v.end());
  return v[k - 1];
}

}  // namespace

TEST_CASE("split_quantile: index arithmetic") {
  Rng rng(1);
  std::vector<double> nine(9);
  for (double& x : nine) x = rng.uniform();
  CHECK(split_quantile(nine, 0.1) == *std::max_element(nine.begin(), nine.end()));

  std::vector<double> big(899);
  for (double& x : big) x = rng.normal();
  CHECK(split_quantile(big, 0.1) == sorted_kth(big, 810));

  std::vector<double> constant(50, 3.25);
  CHECK(split_quantile(constant, 0.1) == 3.25);

  std::vector<double> few(5, 1.0);
  CHECK(std::isinf(split_quantile(few, 0.01)));  // k = 6 > 5

  CHECK_THROWS_AS(split_quantile({}, 0.1), std::invalid_argument);
}

TEST_CASE("split_quantile: permutation invariance") {
  Rng rng(2);
  std::vector<double> scores(200);
  for (double& x : scores) x = rng.normal();
  double q = split_quantile(scores, 0.1);
  for (int trial = 0; trial < 5; ++trial) {
    for (std::size_t i = scores.size() - 1; i > 0; --i)
      std::swap(scores[i], scores[rng.next_u64() % (i + 1)]);
    CHECK(split_quantile(scores, 0.1) == q);
  }
}

TEST_CASE("step_scores: normalized max-norm") {
  std::vector<Eigen::VectorXd> truth(1), pred(1);
  truth[0] = Eigen::Vector2d(0.2, 0.0);
  pred[0] = Eigen::Vector2d(0.0, 0.0);
  Eigen::MatrixXd rho = Eigen::MatrixXd::Constant(1, 2, 0.1);
  CHECK(step_scores(truth, pred, rho)[0] == doctest::Approx(2.0));
  CHECK(step_scores(truth, truth, rho)[0] == doctest::Approx(0.0));
  CHECK(step_scores(truth, pred, 2.0 * rho)[0] == doctest::Approx(1.0));
}

TEST_CASE("score_scale: percentile with floor") {
  std::vector<Eigen::MatrixXd> errs;
  for (int i = 1; i <= 10; ++i) errs.push_back(Eigen::MatrixXd::Constant(2, 1, 0.01 * i));
  Eigen::MatrixXd rho = score_scale(errs, 0.9);
  CHECK(rho(0, 0) == doctest::Approx(0.09));  // 9th of 10 sorted values
  std::vector<Eigen::MatrixXd> zeros(5, Eigen::MatrixXd::Zero(1, 1));
  CHECK(score_scale(zeros)(0, 0) == doctest::Approx(1e-6));
}

TEST_CASE("calibrate_union: K = 1 is plain split CP") {
  Rng rng(3);
  Eigen::MatrixXd S(101, 1);
  for (int i = 0; i < S.rows(); ++i) S(i, 0) = std::abs(rng.normal());
  Eigen::MatrixXd rho = Eigen::MatrixXd::Constant(1, 2, 0.5);
  Calibration c = calibrate_union(S, 0.1, rho);
  std::vector<double> col(S.col(0).begin(), S.col(0).end());
  double q = split_quantile(col, 0.1);
  CHECK(c.eta(0, 0) == doctest::Approx(q * 0.5));
  CHECK_FALSE(c.infeasible);
}

TEST_CASE("calibrate_union: per-step index at alpha/K") {
  Rng rng(4);
  const int n = 900, K = 10;
  Eigen::MatrixXd S(n, K);
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < K; ++t) S(i, t) = std::abs(rng.normal());
  Eigen::MatrixXd rho = Eigen::MatrixXd::Ones(K, 1);
  Calibration c = calibrate_union(S, 0.1, rho);
  for (int t = 0; t < K; ++t) {
    std::vector<double> col(S.col(t).begin(), S.col(t).end());
    CHECK(c.eta(t, 0) == sorted_kth(col, 892));  // ceil(901 * 0.99)
  }
}

TEST_CASE("calibrate_union: infeasible level flags infinite radii") {
  Eigen::MatrixXd S = Eigen::MatrixXd::Ones(50, 20);  // alpha/K = 0.005 needs > 199 trajs
  Calibration c = calibrate_union(S, 0.1, Eigen::MatrixXd::Ones(20, 1));
  CHECK(c.infeasible);
  CHECK(std::isinf(c.eta(0, 0)));
}

TEST_CASE("union-bound calibration covers synthetic trajectories") {
  std::vector<double> coverages;
  const int K = 5;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    auto draw = [&](int rows) {
      Eigen::MatrixXd S(rows, K);
      for (int i = 0; i < rows; ++i)
        for (int t = 0; t < K; ++t) S(i, t) = std::abs(rng.normal()) * (1.0 + 0.2 * t);
      return S;
    };
    Eigen::MatrixXd cal = draw(900), test = draw(2000);
    Calibration c = calibrate_union(cal, 0.1, Eigen::MatrixXd::Ones(K, 1));
    int covered = 0;
    for (int i = 0; i < test.rows(); ++i) {
      bool ok = true;
      for (int t = 0; t < K; ++t) ok = ok && test(i, t) <= c.eta(t, 0);
      covered += ok;
    }
    coverages.push_back(covered / 2000.0);
  }
  std::nth_element(coverages.begin(), coverages.begin() + 10, coverages.end());
  CHECK(coverages[10] >= 0.9);
}

TEST_CASE("optimize_ts_weights: degenerate and comparative cases") {
  Rng rng(7);
  CHECK(optimize_ts_weights(Eigen::MatrixXd::Ones(10, 1), 0.1, rng) ==
        Eigen::VectorXd::Ones(1));

  // iid steps: result never worse than the uniform start
  const int K = 6;
  Eigen::MatrixXd S(300, K);
  for (int i = 0; i < S.rows(); ++i)
    for (int t = 0; t < K; ++t) S(i, t) = std::abs(rng.normal());
  Eigen::VectorXd w = optimize_ts_weights(S, 0.1, rng);
  CHECK(w.minCoeff() >= 0.0);
  CHECK(w.sum() == doctest::Approx(1.0));
  auto quantile_at = [&](const Eigen::VectorXd& ww) {
    std::vector<double> m(S.rows());
    for (int i = 0; i < S.rows(); ++i) m[i] = traj_score(S.row(i).transpose(), ww);
    return split_quantile(std::move(m), 0.1);
  };
  CHECK(quantile_at(w) <= quantile_at(uniform_weights(K)));

  // linearly growing errors: late steps get below-uniform weight
  Eigen::MatrixXd G(300, K);
  for (int i = 0; i < G.rows(); ++i)
    for (int t = 0; t < K; ++t) G(i, t) = (t + 1.0) * std::abs(rng.normal());
  Eigen::VectorXd wg = optimize_ts_weights(G, 0.1, rng);
  CHECK(wg[K - 1] < 1.0 / K);
}

TEST_CASE("calibrate_ts: uniform weights match split CP on max scores bit-exactly") {
  Rng rng(8);
  const int K = 7;
  Eigen::MatrixXd S(100, K);
  for (int i = 0; i < S.rows(); ++i)
    for (int t = 0; t < K; ++t) S(i, t) = std::abs(rng.normal());
  Calibration c = calibrate_ts(S, uniform_weights(K), 0.1, Eigen::MatrixXd::Ones(K, 1));

  // split CP on the max-over-steps score of each trajectory, written
  // independently; under uniform weights both reduce to the same statistic
  const double wu = 1.0 / K;
  std::vector<double> maxes(S.rows());
  for (int i = 0; i < S.rows(); ++i) maxes[i] = (S.row(i) * wu).maxCoeff();
  CHECK(c.q_hat == split_quantile(maxes, 0.1));  // bit-equal quantiles

  // and the resulting regions equal plain split CP radii on unweighted maxes
  std::vector<double> plain(S.rows());
  for (int i = 0; i < S.rows(); ++i) plain[i] = S.row(i).maxCoeff();
  double q_plain = split_quantile(std::move(plain), 0.1);
  for (int t = 0; t < K; ++t)
    CHECK(c.eta(t, 0) == doctest::Approx(q_plain).epsilon(1e-12));
}

TEST_CASE("calibrate_ts: zero quantile and zero weights") {
  const int K = 3;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(50, K);
  Eigen::MatrixXd rho = Eigen::MatrixXd::Ones(K, 2);
  Calibration c = calibrate_ts(S, uniform_weights(K), 0.1, rho);
  CHECK(c.q_hat == 0.0);
  CHECK(c.eta.isZero());

  Eigen::VectorXd w(K);
  w << 0.5, 0.5, 0.0;
  Calibration z = calibrate_ts(S, w, 0.1, rho);
  CHECK(std::isinf(z.eta(2, 0)));
}

TEST_CASE("time-series calibration covers synthetic linear-error trajectories") {
  std::vector<double> coverages;
  const int K = 5;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(2000 + seed);
    auto draw = [&](int rows) {
      Eigen::MatrixXd S(rows, K);
      for (int i = 0; i < rows; ++i) {
        double base = std::abs(rng.normal());
        for (int t = 0; t < K; ++t) S(i, t) = base * (t + 1.0) + 0.1 * std::abs(rng.normal());
      }
      return S;
    };
    Eigen::MatrixXd opt = draw(100), cal = draw(900), test = draw(2000);
    Eigen::VectorXd w = optimize_ts_weights(opt, 0.1, rng);
    Calibration c = calibrate_ts(cal, w, 0.1, Eigen::MatrixXd::Ones(K, 1));
    int covered = 0;
    for (int i = 0; i < test.rows(); ++i)
      covered += traj_score(test.row(i).transpose(), w) <= c.q_hat;
    coverages.push_back(covered / 2000.0);
  }
  std::nth_element(coverages.begin(), coverages.begin() + 10, coverages.end());
  CHECK(coverages[10] >= 0.9);
}

TEST_CASE("marginal coverage on heteroscedastic 1-D regression") {
  int in_range = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(3000 + seed);
    auto sample = [&](double& x, double& y) {
      x = rng.uniform();
      y = std::sin(3.0 * x) + (0.1 + x) * rng.normal();
    };
    std::vector<double> scores(999);
    for (double& s : scores) {
      double x, y;
      sample(x, y);
      s = std::abs(y - std::sin(3.0 * x));
    }
    double q = split_quantile(scores, 0.1);
    int covered = 0;
    for (int i = 0; i < 2000; ++i) {
      double x, y;
      sample(x, y);
      covered += std::abs(y - std::sin(3.0 * x)) <= q;
    }
    double cov = covered / 2000.0;
    in_range += (cov >= 0.88 && cov <= 1.0);
  }
  CHECK(in_range >= 18);
}

TEST_CASE("project_simplex: feasibility and idempotence") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd v(5);
    for (int j = 0; j < 5; ++j) v[j] = rng.uniform(-2.0, 2.0);
    Eigen::VectorXd p = project_simplex(v);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(p.sum() == doctest::Approx(1.0));
    CHECK((project_simplex(p) - p).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("conformal_losses: closed-form examples") {
  // zero-initialized nets: sigmoid(0) = 0.5, radius scale 0.2 -> eta = 0.1
  UncertaintyNet unc(2, 1, {4});
  unc.radius_scale = Eigen::VectorXd::Constant(2, 0.2);
  dyn::DynModel model(2, 1, {});

  Eigen::VectorXd s(2), a(1);
  s << 0.3, -0.2;
  a << 0.1;
  std::vector<dyn::Transition> batch{{s, a, model.predict(s, a)}};  // perfect prediction

  nn::Tape t;
  ConformalLosses r = conformal_losses(t, unc, model, batch, 0.1, 2.0);
  CHECK(r.l_eff == doctest::Approx(0.01));
  CHECK(r.c_emp_soft == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))));
  CHECK(r.l_cov == doctest::Approx(0.0));
  CHECK(r.l_conf == doctest::Approx(r.l_eff));
  CHECK(hard_coverage(unc, model, batch) == doctest::Approx(1.0));
}

TEST_CASE("conformal_losses: gradient reaches the radius net only") {
  Rng rng(11);
  UncertaintyNet unc(3, 2, {6});
  unc.net.init_uniform(rng);
  unc.radius_scale = Eigen::VectorXd::Constant(3, 0.5);
  dyn::DynModel model(3, 2, {4});
  model.net().init_uniform(rng);

  std::vector<dyn::Transition> batch;
  for (int i = 0; i < 6; ++i) {
    dyn::Transition tr;
    tr.state = Eigen::VectorXd(3);
    tr.action = Eigen::VectorXd(2);
    for (int j = 0; j < 3; ++j) tr.state[j] = rng.uniform(-1, 1);
    for (int j = 0; j < 2; ++j) tr.action[j] = rng.uniform(-1, 1);
    tr.next_state = tr.state + Eigen::VectorXd::Constant(3, 0.3 * rng.normal());
    batch.push_back(std::move(tr));
  }

  unc.net.zero_grad();
  model.net().zero_grad();
  {
    nn::Tape t;
    ConformalLosses r = conformal_losses(t, unc, model, batch, 0.1, 1.5);
    t.backward(r.total);
  }
  CHECK(model.net().grads().isZero());
  CHECK(unc.net.grads().cwiseAbs().maxCoeff() > 0.0);

  auto loss = [&]() {
    nn::Tape t;
    return t.sval(conformal_losses(t, unc, model, batch, 0.1, 1.5).total);
  };
  CHECK(max_rel_err(unc.net.grads(), fd_gradient(unc.net.params(), loss)) <= 1e-4);
}

TEST_CASE("soft coverage approaches the hard indicator away from the boundary") {
  Rng rng(13);
  UncertaintyNet unc(2, 1, {4});
  unc.radius_scale = Eigen::VectorXd::Constant(2, 1.0);  // eta = 0.5 each dim
  dyn::DynModel model(2, 1, {});

  std::vector<dyn::Transition> batch;
  for (int i = 0; i < 40; ++i) {
    dyn::Transition tr;
    tr.state = Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1));
    tr.action = Eigen::VectorXd::Constant(1, 0.0);
    // errors either well inside (0.1) or well outside (1.5) the 0.5 radius:
    // normalized scores 0.2 / 3.0, both > 0.05 from the boundary at 1
    double mag = (i % 2 == 0) ? 0.1 : 1.5;
    tr.next_state = model.predict(tr.state, tr.action) + Eigen::Vector2d(mag, 0.0);
    batch.push_back(std::move(tr));
  }
  nn::Tape t;
  ConformalLosses r = conformal_losses(t, unc, model, batch, 0.1, 1.0, 1e-6, 50.0);
  CHECK(std::abs(r.c_emp_soft - hard_coverage(unc, model, batch)) <= 0.02);
}

TEST_CASE("lambda_update: projected ascent") {
  CHECK(lambda_update(0.7, 0.0, 0.01) == doctest::Approx(0.7));
  CHECK(lambda_update(0.0, 0.05, 1.0) == doctest::Approx(0.05));
  CHECK(lambda_update(0.1, -100.0, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("calibration JSON round trip") {
  Rng rng(17);
  Eigen::MatrixXd S(50, 4);
  for (int i = 0; i < 50; ++i)
    for (int t = 0; t < 4; ++t) S(i, t) = std::abs(rng.normal());
  Eigen::MatrixXd rho = Eigen::MatrixXd::Constant(4, 3, 0.25);
  for (Calibration c : {calibrate_union(S, 0.1, rho),
                        calibrate_ts(S, uniform_weights(4), 0.1, rho)}) {
    Calibration back = Calibration::from_json(c.to_json());
    CHECK(back.mode == c.mode);
    CHECK(back.alpha == c.alpha);
    CHECK(back.K == c.K);
    CHECK(back.eta == c.eta);
    if (c.mode == Mode::TimeSeries) {
      CHECK(back.w == c.w);
      CHECK(back.q_hat == c.q_hat);
    }
  }
}
