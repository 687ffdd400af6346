#pragma once

#include <Eigen/Core>
#include <json.hpp>
#include <vector>

#include "csrl/dyn/model.hpp"
#include "csrl/nn/mlp.hpp"
#include "csrl/nn/tape.hpp"
#include "csrl/rng.hpp"

namespace csrl::conformal {

enum class Mode { Union, TimeSeries };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& s);

// Result of calibrating prediction regions at trajectory level 1 - alpha.
// eta(t, j) is the box radius for dimension j at rollout step t+1.
struct Calibration {
  Mode mode = Mode::Union;
  double alpha = 0.1;
  int K = 0;
  Eigen::MatrixXd eta;  // K x n
  Eigen::VectorXd w;    // time-series weights (empty in union mode)
  double q_hat = 0.0;   // time-series trajectory quantile
  bool infeasible = false;

  nlohmann::json to_json() const;
  static Calibration from_json(const nlohmann::json& j);
};

// Normalized max-norm nonconformity: s_t = max_j |true - pred|_{t,j} / rho_{t,j}.
Eigen::VectorXd step_scores(const std::vector<Eigen::VectorXd>& true_traj,
                            const std::vector<Eigen::VectorXd>& pred_traj,
                            const Eigen::MatrixXd& rho);

// Per-step per-dimension score normalizers: the q-th percentile of |error|
// over trajectories, floored. errors[i] is a K x n matrix for trajectory i.
Eigen::MatrixXd score_scale(const std::vector<Eigen::MatrixXd>& abs_errors, double pct = 0.9,
                            double floor = 1e-6);

// k-th smallest score with k = ceil((n+1)(1-alpha)); +inf when k > n.
double split_quantile(std::vector<double> scores, double alpha);

Eigen::VectorXd uniform_weights(int K);

// Trajectory score max_t w_t * s_t.
double traj_score(const Eigen::VectorXd& scores, const Eigen::VectorXd& w);

// S: n_traj x K matrix of per-step scores on the calibration set.
Calibration calibrate_union(const Eigen::MatrixXd& S, double alpha, const Eigen::MatrixXd& rho);

// Projected subgradient descent on the empirical (1-alpha)-quantile of
// trajectory scores; uniform start plus random restarts, best kept.
Eigen::VectorXd optimize_ts_weights(const Eigen::MatrixXd& S, double alpha, Rng& rng,
                                    int restarts = 8, int iters = 200);

Calibration calibrate_ts(const Eigen::MatrixXd& S, const Eigen::VectorXd& w, double alpha,
                         const Eigen::MatrixXd& rho);

// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);

// Radius network: eta_j(s, a) = radius_scale_j * sigmoid_output_j in
// (0, radius_scale_j).
struct UncertaintyNet {
  nn::Mlp net;
  Eigen::VectorXd radius_scale;
  dyn::Standardizer input_std;

  UncertaintyNet() = default;
  UncertaintyNet(int state_dim, int action_dim, const std::vector<int>& hidden);

  Eigen::VectorXd eta(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const;
  nn::Var eta_var(nn::Tape& t, nn::Var state, nn::Var action) const;
};

struct ConformalLosses {
  double l_eff = 0.0;
  double l_cov = 0.0;
  double l_conf = 0.0;
  double c_emp_soft = 0.0;
  nn::Var total;  // l_eff + lambda * l_cov, differentiable in the radius net only
};

// The dynamics model is treated as a constant here: its predictions enter as
// plain values, so gradients reach only the radius network.
ConformalLosses conformal_losses(nn::Tape& t, const UncertaintyNet& unc,
                                 const dyn::DynModel& model,
                                 const std::vector<dyn::Transition>& batch, double alpha,
                                 double lambda, double c = 1e-6, double temp = 10.0);

// Hard-indicator empirical coverage: fraction of transitions whose error falls
// inside the predicted radii in every dimension.
double hard_coverage(const UncertaintyNet& unc, const dyn::DynModel& model,
                     const std::vector<dyn::Transition>& batch);

// Projected gradient ascent step on the Lagrange multiplier.
double lambda_update(double lambda, double l_cov, double step_size);

}  // namespace csrl::conformal
