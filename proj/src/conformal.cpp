#include "csrl/conformal/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace csrl::conformal {

using nn::Tape;
using nn::Var;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::string mode_name(Mode m) { return m == Mode::Union ? "union" : "ts"; }

Mode mode_from_name(const std::string& s) {
  if (s == "union") return Mode::Union;
  if (s == "ts" || s == "time-series" || s == "timeseries") return Mode::TimeSeries;
  throw std::invalid_argument("unknown calibration mode: " + s);
}

nlohmann::json Calibration::to_json() const {
  nlohmann::json j;
  j["mode"] = mode_name(mode);
  j["alpha"] = alpha;
  j["K"] = K;
  j["infeasible"] = infeasible;
  std::vector<std::vector<double>> rows(eta.rows());
  for (int t = 0; t < eta.rows(); ++t)
    rows[t] = std::vector<double>(eta.row(t).begin(), eta.row(t).end());
  j["eta"] = rows;
  if (mode == Mode::TimeSeries) {
    j["w"] = std::vector<double>(w.begin(), w.end());
    j["q_hat"] = q_hat;
  }
  return j;
}

Calibration Calibration::from_json(const nlohmann::json& j) {
  Calibration c;
  c.mode = mode_from_name(j.at("mode").get<std::string>());
  c.alpha = j.at("alpha").get<double>();
  c.K = j.at("K").get<int>();
  c.infeasible = j.at("infeasible").get<bool>();
  const auto& rows = j.at("eta");
  int n = rows.empty() ? 0 : static_cast<int>(rows[0].size());
  c.eta.resize(rows.size(), n);
  for (int t = 0; t < c.eta.rows(); ++t)
    for (int d = 0; d < n; ++d) c.eta(t, d) = rows[t][d].get<double>();
  if (c.mode == Mode::TimeSeries) {
    const auto& wv = j.at("w");
    c.w.resize(wv.size());
    for (int t = 0; t < c.w.size(); ++t) c.w[t] = wv[t].get<double>();
    c.q_hat = j.at("q_hat").get<double>();
  }
  return c;
}

Eigen::VectorXd step_scores(const std::vector<Eigen::VectorXd>& true_traj,
                            const std::vector<Eigen::VectorXd>& pred_traj,
                            const Eigen::MatrixXd& rho) {
  if (true_traj.size() != pred_traj.size() ||
      static_cast<int>(true_traj.size()) != rho.rows())
    throw std::invalid_argument("step_scores: length mismatch");
  Eigen::VectorXd s(rho.rows());
  for (int t = 0; t < rho.rows(); ++t) {
    Eigen::VectorXd err = (true_traj[t] - pred_traj[t]).cwiseAbs();
    s[t] = err.cwiseQuotient(rho.row(t).transpose()).maxCoeff();
  }
  return s;
}

Eigen::MatrixXd score_scale(const std::vector<Eigen::MatrixXd>& abs_errors, double pct,
                            double floor) {
  if (abs_errors.empty()) throw std::invalid_argument("score_scale: no data");
  const int K = static_cast<int>(abs_errors.front().rows());
  const int n = static_cast<int>(abs_errors.front().cols());
  Eigen::MatrixXd rho(K, n);
  std::vector<double> vals(abs_errors.size());
  for (int t = 0; t < K; ++t) {
    for (int d = 0; d < n; ++d) {
      for (std::size_t i = 0; i < abs_errors.size(); ++i) vals[i] = abs_errors[i](t, d);
      std::size_t k = static_cast<std::size_t>(std::ceil(pct * vals.size()));
      k = std::min(std::max<std::size_t>(k, 1), vals.size());
      std::nth_element(vals.begin(), vals.begin() + (k - 1), vals.end());
      rho(t, d) = std::max(vals[k - 1], floor);
    }
  }
  return rho;
}

double split_quantile(std::vector<double> scores, double alpha) {
  if (scores.empty()) throw std::invalid_argument("split_quantile: empty scores");
  const std::size_t n = scores.size();
  const std::size_t k =
      static_cast<std::size_t>(std::ceil((static_cast<double>(n) + 1.0) * (1.0 - alpha)));
  if (k > n) return kInf;
  std::nth_element(scores.begin(), scores.begin() + (k - 1), scores.end());
  return scores[k - 1];
}

Eigen::VectorXd uniform_weights(int K) { return Eigen::VectorXd::Constant(K, 1.0 / K); }

double traj_score(const Eigen::VectorXd& scores, const Eigen::VectorXd& w) {
  return scores.cwiseProduct(w).maxCoeff();
}

Calibration calibrate_union(const Eigen::MatrixXd& S, double alpha, const Eigen::MatrixXd& rho) {
  const int K = static_cast<int>(S.cols());
  Calibration c;
  c.mode = Mode::Union;
  c.alpha = alpha;
  c.K = K;
  c.eta.resize(K, rho.cols());
  const double level = alpha / K;
  for (int t = 0; t < K; ++t) {
    std::vector<double> col(S.col(t).begin(), S.col(t).end());
    double q = split_quantile(col, level);
    if (std::isinf(q)) c.infeasible = true;
    c.eta.row(t) = q * rho.row(t);
  }
  return c;
}

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const int n = static_cast<int>(v.size());
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0, tau = 0.0;
  int rho = 0;
  for (int j = 0; j < n; ++j) {
    cum += u[j];
    double cand = (cum - 1.0) / (j + 1);
    if (u[j] - cand > 0.0) {
      rho = j + 1;
      tau = cand;
    }
  }
  return (v.array() - tau).max(0.0);
}

namespace {

// empirical quantile objective and a subgradient at w
double ts_objective(const Eigen::MatrixXd& S, const Eigen::VectorXd& w, double alpha,
                    Eigen::VectorXd* grad = nullptr) {
  const int n = static_cast<int>(S.rows());
  std::vector<double> m(n);
  for (int i = 0; i < n; ++i) m[i] = traj_score(S.row(i).transpose(), w);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const int k = static_cast<int>(std::ceil((n + 1.0) * (1.0 - alpha)));
  if (k > n) {
    if (grad) grad->setZero();
    return kInf;
  }
  std::nth_element(order.begin(), order.begin() + (k - 1), order.end(),
                   [&](int a, int b) { return m[a] < m[b]; });
  const int i_star = order[k - 1];
  if (grad) {
    grad->setZero();
    int t_star = 0;
    S.row(i_star).transpose().cwiseProduct(w).maxCoeff(&t_star);
    (*grad)[t_star] = S(i_star, t_star);
  }
  return m[i_star];
}

}  // namespace

Eigen::VectorXd optimize_ts_weights(const Eigen::MatrixXd& S, double alpha, Rng& rng,
                                    int restarts, int iters) {
  const int K = static_cast<int>(S.cols());
  if (K == 1) return Eigen::VectorXd::Ones(1);

  const double scale = std::max(S.cwiseAbs().maxCoeff(), 1e-12);
  Eigen::VectorXd best_w = uniform_weights(K);
  double best_obj = ts_objective(S, best_w, alpha);

  for (int r = 0; r <= restarts; ++r) {
    Eigen::VectorXd w;
    if (r == 0) {
      w = uniform_weights(K);
    } else {
      w.resize(K);
      for (int t = 0; t < K; ++t) w[t] = -std::log(std::max(rng.uniform(), 1e-300));
      w /= w.sum();
    }
    Eigen::VectorXd grad(K);
    for (int it = 0; it < iters; ++it) {
      double obj = ts_objective(S, w, alpha, &grad);
      if (obj < best_obj) {
        best_obj = obj;
        best_w = w;
      }
      double lr = 0.5 / (scale * std::sqrt(1.0 + it));
      w = project_simplex(w - lr * grad);
    }
    double obj = ts_objective(S, w, alpha);
    if (obj < best_obj) {
      best_obj = obj;
      best_w = w;
    }
  }
  return best_w;
}

Calibration calibrate_ts(const Eigen::MatrixXd& S, const Eigen::VectorXd& w, double alpha,
                         const Eigen::MatrixXd& rho) {
  const int K = static_cast<int>(S.cols());
  if (w.size() != K) throw std::invalid_argument("calibrate_ts: weight length mismatch");
  Calibration c;
  c.mode = Mode::TimeSeries;
  c.alpha = alpha;
  c.K = K;
  c.w = w;
  std::vector<double> m(S.rows());
  for (int i = 0; i < S.rows(); ++i) m[i] = traj_score(S.row(i).transpose(), w);
  c.q_hat = split_quantile(std::move(m), alpha);
  if (std::isinf(c.q_hat)) c.infeasible = true;
  c.eta.resize(K, rho.cols());
  for (int t = 0; t < K; ++t) {
    if (w[t] <= 0.0)
      c.eta.row(t).setConstant(kInf);
    else
      c.eta.row(t) = (c.q_hat / w[t]) * rho.row(t);
  }
  return c;
}

UncertaintyNet::UncertaintyNet(int state_dim, int action_dim, const std::vector<int>& hidden) {
  std::vector<int> sizes;
  sizes.push_back(state_dim + action_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(state_dim);
  net = nn::Mlp(sizes, nn::Act::Sigmoid);
  radius_scale = Eigen::VectorXd::Ones(state_dim);
  input_std = dyn::Standardizer::identity(state_dim + action_dim);
}

Eigen::VectorXd UncertaintyNet::eta(const Eigen::VectorXd& state,
                                    const Eigen::VectorXd& action) const {
  Eigen::VectorXd x(state.size() + action.size());
  x << state, action;
  return radius_scale.cwiseProduct(net.forward(input_std.apply(x)));
}

Var UncertaintyNet::eta_var(Tape& t, Var state, Var action) const {
  Var x = nn::concat(t, {state, action});
  Var out = net.apply(t, input_std.apply_var(t, x));
  return nn::cmul(t, t.leaf(radius_scale), out);
}

ConformalLosses conformal_losses(Tape& t, const UncertaintyNet& unc, const dyn::DynModel& model,
                                 const std::vector<dyn::Transition>& batch, double alpha,
                                 double lambda, double c, double temp) {
  if (batch.empty()) throw std::invalid_argument("conformal_losses: empty batch");
  if (c <= 0.0) throw std::invalid_argument("conformal_losses: c must be positive");
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  Var l_eff = t.scalar(0.0);
  Var cov = t.scalar(0.0);
  for (const dyn::Transition& tr : batch) {
    Var eta = unc.eta_var(t, t.leaf(tr.state), t.leaf(tr.action));
    l_eff = nn::add(t, l_eff, nn::vprod(t, eta));

    // prediction error enters as a constant: the dynamics model is not
    // updated through this loss
    Eigen::VectorXd err = (model.predict(tr.state, tr.action) - tr.next_state).cwiseAbs();
    Var ratio = nn::cdiv(t, t.leaf(err), nn::cmax_const(t, eta, c));
    Var inside = nn::add_const(t, nn::neg(t, nn::vmax(t, ratio)), 1.0);
    cov = nn::add(t, cov, nn::vsigmoid(t, nn::scale(t, inside, temp)));
  }
  l_eff = nn::scale(t, l_eff, inv_n);
  cov = nn::scale(t, cov, inv_n);

  Var hinge = nn::maxs(t, nn::add_const(t, nn::neg(t, cov), 1.0 - alpha), t.scalar(0.0));
  Var total = nn::add(t, l_eff, nn::scale(t, hinge, lambda));

  ConformalLosses out;
  out.l_eff = t.sval(l_eff);
  out.c_emp_soft = t.sval(cov);
  out.l_cov = t.sval(hinge);
  out.l_conf = t.sval(total);
  out.total = total;
  return out;
}

double hard_coverage(const UncertaintyNet& unc, const dyn::DynModel& model,
                     const std::vector<dyn::Transition>& batch) {
  if (batch.empty()) throw std::invalid_argument("hard_coverage: empty batch");
  int covered = 0;
  for (const dyn::Transition& tr : batch) {
    Eigen::VectorXd err = (model.predict(tr.state, tr.action) - tr.next_state).cwiseAbs();
    if ((err.array() <= unc.eta(tr.state, tr.action).array()).all()) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(batch.size());
}

double lambda_update(double lambda, double l_cov, double step_size) {
  return std::max(0.0, lambda + step_size * l_cov);
}

}  // namespace csrl::conformal
