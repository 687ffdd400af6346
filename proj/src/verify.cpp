#include "csrl/verify/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace csrl::verify {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct TrajPair {
  std::vector<Eigen::VectorXd> true_states;  // s_1 .. s_K
  std::vector<Eigen::VectorXd> pred_states;  // surrogate s_1 .. s_K
  int diverged_at = -1;                      // first surrogate step outside the sane ball
};

// Both rollouts run from the same initial state under the deterministic
// policy; the true rollout ignores termination so every trajectory has full
// length. A diverged surrogate state is frozen so downstream scores stay
// finite (and enormous).
TrajPair paired_rollout(const env::Env& env, const rl::PolicyNet& policy,
                        const dyn::DynModel& model, const Eigen::VectorXd& s0, int K) {
  TrajPair out;
  Eigen::VectorXd s_true = s0, s_pred = s0;
  bool frozen = false;
  for (int t = 0; t < K; ++t) {
    Eigen::VectorXd a_true =
        policy.mean(env.observe(s_true, t)).cwiseMax(-1.0).cwiseMin(1.0);
    s_true = env.step(s_true, a_true, t).state;
    out.true_states.push_back(s_true);

    if (!frozen) {
      Eigen::VectorXd a_pred =
          policy.mean(env.observe(s_pred, t)).cwiseMax(-1.0).cwiseMin(1.0);
      Eigen::VectorXd next = model.predict(s_pred, a_pred);
      if (!next.allFinite() || next.norm() > dyn::kRolloutDivergence) {
        frozen = true;
        out.diverged_at = t + 1;
        s_pred = Eigen::VectorXd::Constant(s_pred.size(), dyn::kRolloutDivergence);
      } else {
        s_pred = next;
      }
    }
    out.pred_states.push_back(s_pred);
  }
  return out;
}

}  // namespace

double hoeffding_bound(long v_count, long n, double delta, double alpha) {
  if (n <= 0) throw std::invalid_argument("hoeffding_bound: N must be positive");
  if (v_count < 0 || v_count > n)
    throw std::invalid_argument("hoeffding_bound: V_count outside [0, N]");
  if (alpha <= 0.0 || alpha >= 1.0 || delta <= 0.0 || delta >= 1.0)
    throw std::invalid_argument("hoeffding_bound: alpha and delta must lie in (0,1)");
  const double frac = static_cast<double>(v_count) / static_cast<double>(n);
  const double slack = std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(n)));
  return (frac - slack) * (1.0 - alpha) * (1.0 - delta);
}

std::string VerificationReport::csv_header() {
  return "K,mode,v_count,n,empirical_safe_fraction,hoeffding_term,lower_bound,infeasible";
}

std::string VerificationReport::to_csv() const {
  std::string s = csv_header() + "\n";
  for (const auto& r : rows) {
    s += std::to_string(r.K) + "," + conformal::mode_name(r.mode) + "," +
         std::to_string(r.v_count) + "," + std::to_string(r.n) + "," +
         fmt(r.empirical_safe_fraction) + "," + fmt(r.hoeffding_term) + "," +
         fmt(r.lower_bound) + "," + (r.infeasible ? "1" : "0") + "\n";
  }
  return s;
}

nlohmann::json VerificationReport::to_json() const {
  nlohmann::json j;
  j["alpha"] = alpha;
  j["delta"] = delta;
  j["seed"] = seed;
  j["checkpoint_id"] = checkpoint_id;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"K", r.K},
                         {"mode", conformal::mode_name(r.mode)},
                         {"v_count", r.v_count},
                         {"n", r.n},
                         {"empirical_safe_fraction", r.empirical_safe_fraction},
                         {"hoeffding_term", r.hoeffding_term},
                         {"lower_bound", r.lower_bound},
                         {"infeasible", r.infeasible}});
  }
  return j;
}

std::string VerificationReport::to_svg() const {
  const double x0 = 60, x1 = 560, y0 = 360, y1 = 40;  // plot area, y grows downward
  int k_max = 1;
  for (const auto& r : rows) k_max = std::max(k_max, r.K);
  auto px = [&](double k) { return x0 + (x1 - x0) * (k - 1.0) / std::max(k_max - 1, 1); };
  auto py = [&](double b) { return y0 + (y1 - y0) * (b + 1.0) / 2.0; };

  std::string s =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"620\" height=\"400\">\n"
      "<rect width=\"620\" height=\"400\" fill=\"white\"/>\n";
  // axes and reference lines at bounds -1, 0, 1
  for (double b : {-1.0, 0.0, 1.0}) {
    s += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(py(b)) + "\" x2=\"" + fmt(x1) +
         "\" y2=\"" + fmt(py(b)) + "\" stroke=\"#cccccc\"/>\n";
    s += "<text x=\"10\" y=\"" + fmt(py(b) + 4) + "\" font-size=\"12\">" + fmt(b) +
         "</text>\n";
  }
  s += "<text x=\"" + fmt((x0 + x1) / 2) +
       "\" y=\"390\" font-size=\"12\">horizon K</text>\n";

  const char* colors[] = {"#1f77b4", "#d62728"};
  int ci = 0;
  for (conformal::Mode m : {conformal::Mode::Union, conformal::Mode::TimeSeries}) {
    std::string pts;
    for (const auto& r : rows)
      if (r.mode == m) pts += fmt(px(r.K)) + "," + fmt(py(r.lower_bound)) + " ";
    if (pts.empty()) continue;
    s += std::string("<polyline fill=\"none\" stroke=\"") + colors[ci] +
         "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    s += std::string("<text x=\"") + fmt(x0 + 10) + "\" y=\"" + fmt(y1 + 14.0 * (ci + 1)) +
         "\" font-size=\"12\" fill=\"" + colors[ci] + "\">" + conformal::mode_name(m) +
         "</text>\n";
    ++ci;
  }
  s += "</svg>\n";
  return s;
}

VerificationReport verify(const rl::PolicyNet& policy, const dyn::DynModel& model,
                          const env::Env& env, const VerifyConfig& cfg) {
  if (cfg.k_max < 1 || cfg.n_cal < 1 || cfg.n_ver < 1 || cfg.n_rho < 1)
    throw std::invalid_argument("verify: non-positive set size");
  bool wants_ts = false;
  for (conformal::Mode m : cfg.modes) wants_ts |= (m == conformal::Mode::TimeSeries);
  if (wants_ts && (cfg.n_opt < 1 || cfg.n_opt >= cfg.n_cal))
    throw std::invalid_argument("verify: time-series mode needs 1 <= n_opt < n_cal");

  const safety::SafetySpec& spec = env.safety_spec();
  const int n = env.state_dim();
  const int K = cfg.k_max;
  Rng root(cfg.seed);
  Rng rng_rho = root.derive("verify/rho");
  Rng rng_cal = root.derive("verify/cal");
  Rng rng_ver = root.derive("verify/ver");
  Rng rng_w = root.derive("verify/weights");

  // score normalizers from a dedicated trajectory split
  std::vector<Eigen::MatrixXd> abs_errs;
  abs_errs.reserve(cfg.n_rho);
  for (int i = 0; i < cfg.n_rho; ++i) {
    TrajPair tp = paired_rollout(env, policy, model, env.reset(rng_rho), K);
    Eigen::MatrixXd e(K, n);
    for (int t = 0; t < K; ++t)
      e.row(t) = (tp.true_states[t] - tp.pred_states[t]).cwiseAbs().transpose();
    abs_errs.push_back(std::move(e));
  }
  const Eigen::MatrixXd rho = conformal::score_scale(abs_errs);

  // calibration scores (maximal horizon; truncated per K below)
  Eigen::MatrixXd S(cfg.n_cal, K);
  for (int i = 0; i < cfg.n_cal; ++i) {
    TrajPair tp = paired_rollout(env, policy, model, env.reset(rng_cal), K);
    S.row(i) = conformal::step_scores(tp.true_states, tp.pred_states, rho).transpose();
  }

  // verification rollouts: surrogate reach-box centers from fresh initial states
  std::vector<std::vector<Eigen::VectorXd>> centers(cfg.n_ver);
  std::vector<int> diverged_at(cfg.n_ver, -1);
  for (int i = 0; i < cfg.n_ver; ++i) {
    TrajPair tp = paired_rollout(env, policy, model, env.reset(rng_ver), K);
    centers[i] = std::move(tp.pred_states);
    diverged_at[i] = tp.diverged_at;
  }

  VerificationReport rep;
  rep.alpha = cfg.alpha;
  rep.delta = cfg.delta;
  rep.seed = cfg.seed;
  rep.checkpoint_id = cfg.checkpoint_id;

  const double slack = std::sqrt(std::log(2.0 / cfg.delta) / (2.0 * cfg.n_ver));
  for (int k = 1; k <= K; ++k) {
    for (conformal::Mode m : cfg.modes) {
      conformal::Calibration cal;
      if (m == conformal::Mode::Union) {
        cal = conformal::calibrate_union(S.leftCols(k), cfg.alpha, rho.topRows(k));
      } else {
        Rng rw = rng_w.derive(static_cast<std::uint64_t>(k));
        Eigen::VectorXd w =
            conformal::optimize_ts_weights(S.topRows(cfg.n_opt).leftCols(k), cfg.alpha, rw);
        cal = conformal::calibrate_ts(S.bottomRows(cfg.n_cal - cfg.n_opt).leftCols(k), w,
                                      cfg.alpha, rho.topRows(k));
      }

      VerificationRow row;
      row.K = k;
      row.mode = m;
      row.n = cfg.n_ver;
      row.hoeffding_term = slack;
      if (cal.infeasible) {
        row.infeasible = true;
        row.lower_bound = -1.0;
      } else {
        long v = 0;
        for (int i = 0; i < cfg.n_ver; ++i) {
          if (diverged_at[i] >= 1 && diverged_at[i] <= k) continue;
          bool safe = true;
          for (int t = 1; t <= k && safe; ++t) {
            safety::ReachBox box{centers[i][t - 1], cal.eta.row(t - 1).transpose()};
            safe = safety::g_box(spec, box, t) <= 0.0;
          }
          if (safe) ++v;
        }
        row.v_count = v;
        row.empirical_safe_fraction = static_cast<double>(v) / cfg.n_ver;
        row.lower_bound =
            std::clamp(hoeffding_bound(v, cfg.n_ver, cfg.delta, cfg.alpha), -1.0, 1.0);
      }
      rep.rows.push_back(row);
    }
  }
  return rep;
}

double EvalStats::reward_stderr() const {
  const std::size_t n = episode_rewards.size();
  if (n < 2) return 0.0;
  double var = 0.0;
  for (double r : episode_rewards) var += (r - mean_reward) * (r - mean_reward);
  var /= static_cast<double>(n - 1);
  return std::sqrt(var / static_cast<double>(n));
}

EvalStats empirical_eval(const rl::PolicyNet& policy, const env::Env& env, int n_episodes,
                         int horizon, Rng& rng) {
  if (n_episodes < 1 || horizon < 1)
    throw std::invalid_argument("empirical_eval: non-positive episode count or horizon");
  EvalStats st;
  st.episodes = n_episodes;
  double total_reward = 0.0;
  long total_cost = 0;
  int clean_episodes = 0;
  for (int ep = 0; ep < n_episodes; ++ep) {
    Eigen::VectorXd s = env.reset(rng);
    long ep_cost = 0;
    double ep_reward = 0.0;
    for (int t = 0; t < horizon; ++t) {
      Eigen::VectorXd a = policy.mean(env.observe(s, t)).cwiseMax(-1.0).cwiseMin(1.0);
      env::StepResult r = env.step(s, a, t);
      ep_reward += r.reward;
      ep_cost += r.cost;
      ++st.total_steps;
      if (r.terminated) break;
      s = std::move(r.state);
    }
    total_reward += ep_reward;
    st.episode_rewards.push_back(ep_reward);
    total_cost += ep_cost;
    if (ep_cost == 0) ++clean_episodes;
  }
  st.mean_reward = total_reward / n_episodes;
  st.mean_cost_rate = static_cast<double>(total_cost) / static_cast<double>(st.total_steps);
  st.violation_free_fraction = static_cast<double>(clean_episodes) / n_episodes;
  return st;
}

}  // namespace csrl::verify
