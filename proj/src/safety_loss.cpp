#include "csrl/safety/loss.hpp"

#include <stdexcept>

namespace csrl::safety {

using nn::Tape;
using nn::Var;

SafetyLossResult safety_loss(Tape& t, const rl::PolicyNet& policy, const dyn::DynModel& model,
                             const conformal::UncertaintyNet& unc, const env::Env& env,
                             const std::vector<Eigen::VectorXd>& init_set, int K_e,
                             const SafetyLossConfig& cfg) {
  if (K_e < 1) throw std::invalid_argument("safety_loss: K_e must be >= 1");
  if (init_set.empty()) throw std::invalid_argument("safety_loss: empty initial set");
  const SafetySpec& spec = env.safety_spec();

  Var l_max;
  Var improve_sum = t.scalar(0.0);
  bool first = true;
  for (const Eigen::VectorXd& s0 : init_set) {
    Var s_prev = t.leaf(s0);
    Var g_first, g_last;
    for (int step = 1; step <= K_e; ++step) {
      Var a = policy.mean_var(t, env.observe_var(t, s_prev, step - 1));
      Var eta = unc.eta_var(t, s_prev, a);
      Var s = model.predict_var(t, s_prev, a);
      const Eigen::VectorXd& sv = t.val(s);
      if (!sv.allFinite() || sv.norm() > dyn::kRolloutDivergence) {
        SafetyLossResult out;
        out.diverged = true;
        out.l_max = cfg.divergence_sentinel;
        out.l_improve = cfg.divergence_sentinel;
        out.value = (cfg.w_max + cfg.w_improve) * cfg.divergence_sentinel;
        out.total = t.scalar(out.value);
        return out;
      }
      Var g = g_box_var(t, spec, s, eta, step);
      l_max = first ? g : nn::maxs(t, l_max, g);
      first = false;
      if (step == 1) g_first = g;
      if (step == K_e) g_last = g;
      s_prev = s;
    }
    Var diff = cfg.improve_as_described ? nn::sub(t, g_last, g_first)
                                        : nn::sub(t, g_first, g_last);
    improve_sum = nn::add(t, improve_sum, diff);
  }
  const double norm = 1.0 / (static_cast<double>(init_set.size()) * K_e);
  Var l_improve = nn::scale(t, improve_sum, norm);
  Var total = nn::add(t, nn::scale(t, l_max, cfg.w_max), nn::scale(t, l_improve, cfg.w_improve));

  SafetyLossResult out;
  out.l_max = t.sval(l_max);
  out.l_improve = t.sval(l_improve);
  out.value = t.sval(total);
  out.total = total;
  return out;
}

std::vector<Eigen::VectorXd> make_init_set(const env::Env& env, int n0, Rng& rng) {
  std::vector<Eigen::VectorXd> states;
  states.reserve(n0);
  for (int i = 0; i < n0; ++i) {
    Eigen::VectorXd s = env.reset(rng);
    if (!is_safe(env.safety_spec(), s, 0))
      throw std::runtime_error("make_init_set: unsafe initial state from reset");
    states.push_back(std::move(s));
  }
  return states;
}

}  // namespace csrl::safety
