#include "csrl/env/env.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace csrl::env {

using nn::Tape;
using nn::Var;

namespace {
constexpr double kPi = 3.141592653589793;
}

EnvTag env_tag_from_name(const std::string& name) {
  if (name == "cartpole") return EnvTag::CartPole;
  if (name == "lanefollow") return EnvTag::LaneFollow;
  if (name == "quad2d") return EnvTag::Quad2D;
  if (name == "quad3d") return EnvTag::Quad3D;
  if (name == "quad2d_nl") return EnvTag::Quad2DNl;
  throw std::invalid_argument("unknown environment: " + name);
}

std::string env_name(EnvTag tag) {
  switch (tag) {
    case EnvTag::CartPole: return "cartpole";
    case EnvTag::LaneFollow: return "lanefollow";
    case EnvTag::Quad2D: return "quad2d";
    case EnvTag::Quad3D: return "quad3d";
    case EnvTag::Quad2DNl: return "quad2d_nl";
  }
  return "?";
}

EnvConfig default_config(EnvTag tag) {
  EnvConfig c;
  switch (tag) {
    case EnvTag::CartPole: {
      c.dt = 0.05;
      c.max_steps = 500;
      c.init_lo = Eigen::VectorXd::Constant(4, -0.05);
      c.init_hi = Eigen::VectorXd::Constant(4, 0.05);
      break;
    }
    case EnvTag::LaneFollow: {
      c.dt = 0.05;
      c.max_steps = 500;
      c.init_lo = Eigen::VectorXd(3);
      c.init_hi = Eigen::VectorXd(3);
      c.init_lo << -0.35, -kPi / 8.0, 2.4;
      c.init_hi << 0.35, kPi / 8.0, 3.6;
      break;
    }
    case EnvTag::Quad2D:
    case EnvTag::Quad2DNl: {
      c.dt = 0.02;
      c.max_steps = 400;
      c.init_lo = Eigen::VectorXd::Zero(6);
      c.init_hi = Eigen::VectorXd::Zero(6);
      c.init_lo[0] = -4.75;
      c.init_hi[0] = -4.25;
      c.init_lo[1] = 1.75;
      c.init_hi[1] = 2.25;
      c.goal = Eigen::VectorXd(2);
      c.goal << 5.0, -1.5;
      c.goal_radius = 0.3;
      c.goal_bonus = 10.0;
      if (tag == EnvTag::Quad2D) {
        auto haz = [](double x, double y, double r) {
          Hazard h;
          h.pos = Eigen::VectorXd(2);
          h.pos << x, y;
          h.radius = r;
          return h;
        };
        c.hazards = {haz(-1.5, 1.0, 0.8), haz(1.0, -0.5, 0.8), haz(3.0, 0.8, 0.8)};
      }
      break;
    }
    case EnvTag::Quad3D: {
      c.dt = 0.02;
      c.max_steps = 400;
      c.init_lo = Eigen::VectorXd::Zero(12);
      c.init_hi = Eigen::VectorXd::Zero(12);
      c.init_lo[0] = -4.75;
      c.init_hi[0] = -4.25;
      c.init_lo[1] = -2.25;
      c.init_hi[1] = -1.75;
      c.init_lo[2] = 0.75;
      c.init_hi[2] = 1.25;
      c.goal = Eigen::VectorXd(3);
      c.goal << 4.5, 4.5, 3.0;
      c.goal_radius = 0.4;
      c.goal_bonus = 50.0;
      auto haz = [](double x, double y, double z, double r) {
        Hazard h;
        h.pos = Eigen::VectorXd(3);
        h.pos << x, y, z;
        h.radius = r;
        return h;
      };
      c.hazards = {haz(-1.0, 0.0, 1.5, 1.0), haz(1.5, 1.5, 2.0, 1.0), haz(3.0, 3.0, 2.5, 1.0)};
      break;
    }
  }
  return c;
}

Env Env::make(const std::string& name) {
  EnvTag tag = env_tag_from_name(name);
  return Env(tag, default_config(tag));
}

Env Env::make(EnvTag tag, EnvConfig cfg) { return Env(tag, std::move(cfg)); }

Env::Env(EnvTag tag, EnvConfig cfg) : tag_(tag), cfg_(std::move(cfg)), name_(env_name(tag)) {
  build_spec();
}

int Env::state_dim() const {
  switch (tag_) {
    case EnvTag::CartPole: return 4;
    case EnvTag::LaneFollow: return 3;
    case EnvTag::Quad2D:
    case EnvTag::Quad2DNl: return 6;
    case EnvTag::Quad3D: return 12;
  }
  return 0;
}

int Env::action_dim() const {
  switch (tag_) {
    case EnvTag::CartPole: return 1;
    case EnvTag::LaneFollow: return 2;
    case EnvTag::Quad2D:
    case EnvTag::Quad2DNl: return 2;
    case EnvTag::Quad3D: return 4;
  }
  return 0;
}

int Env::obs_dim() const {
  switch (tag_) {
    case EnvTag::CartPole: return 4;
    case EnvTag::LaneFollow: return 3;
    case EnvTag::Quad2D: return 12;
    case EnvTag::Quad2DNl: return 11;
    case EnvTag::Quad3D: return 20;
  }
  return 0;
}

void Env::build_spec() {
  spec_.state_dim = state_dim();
  spec_.rows.clear();
  auto bound = [&](int dim, double limit) {
    safety::AffineRow up, lo;
    up.a = Eigen::VectorXd::Zero(spec_.state_dim);
    up.a[dim] = 1.0;
    up.b = limit;
    lo.a = Eigen::VectorXd::Zero(spec_.state_dim);
    lo.a[dim] = -1.0;
    lo.b = limit;
    spec_.rows.push_back(up);
    spec_.rows.push_back(lo);
  };
  auto hazard_rows = [&](const std::vector<int>& pos_dims) {
    for (const Hazard& hz : cfg_.hazards) {
      safety::DistanceRow dr;
      dr.pos_dims = pos_dims;
      dr.obstacle.base = hz.pos;
      dr.d_safe = hz.radius + cfg_.hazard_buffer;
      spec_.rows.push_back(dr);
    }
  };
  switch (tag_) {
    case EnvTag::CartPole:
      bound(2, cfg_.theta_max);  // pole angle
      bound(0, cfg_.x_max);      // cart position
      break;
    case EnvTag::LaneFollow:
      bound(0, cfg_.lat_max);
      bound(1, cfg_.heading_max);
      break;
    case EnvTag::Quad2D:
      bound(0, cfg_.pos_bound_xy);
      bound(1, cfg_.pos_bound_y2d);
      bound(2, cfg_.q2_angle_max);
      hazard_rows({0, 1});
      break;
    case EnvTag::Quad2DNl: {
      bound(0, cfg_.pos_bound_xy);
      bound(1, cfg_.pos_bound_y2d);
      bound(2, cfg_.q2_angle_max);
      safety::DistanceRow dr;
      dr.pos_dims = {0, 1};
      dr.obstacle.base = Eigen::VectorXd::Zero(2);
      dr.obstacle.moving = true;
      dr.obstacle.amp_x = cfg_.obs_amp_x;
      dr.obstacle.amp_y = cfg_.obs_amp_y;
      dr.obstacle.omega = cfg_.obs_omega;
      dr.d_safe = cfg_.d_safe;
      spec_.rows.push_back(dr);
      break;
    }
    case EnvTag::Quad3D:
      bound(0, cfg_.pos_bound_xy);
      bound(1, cfg_.pos_bound_xy);
      bound(2, cfg_.pos_bound_xy);
      bound(3, cfg_.q3_angle_max);  // roll
      bound(4, cfg_.q3_angle_max);  // pitch
      hazard_rows({0, 1, 2});
      break;
  }
}

Eigen::VectorXd Env::reset(Rng& rng) const {
  Eigen::VectorXd s(state_dim());
  for (int j = 0; j < s.size(); ++j) s[j] = rng.uniform(cfg_.init_lo[j], cfg_.init_hi[j]);
  return s;
}

Eigen::VectorXd Env::deriv(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const {
  Eigen::VectorXd d(state_dim());
  switch (tag_) {
    case EnvTag::CartPole: {
      double force = cfg_.force_mag * a[0];
      double theta = s[2], theta_dot = s[3];
      double total_mass = cfg_.cart_mass + cfg_.pole_mass;
      double ml = cfg_.pole_mass * cfg_.pole_half_len;
      double sin_t = std::sin(theta), cos_t = std::cos(theta);
      double temp = (force + ml * theta_dot * theta_dot * sin_t) / total_mass;
      double theta_acc =
          (cfg_.gravity * sin_t - cos_t * temp) /
          (cfg_.pole_half_len * (4.0 / 3.0 - cfg_.pole_mass * cos_t * cos_t / total_mass));
      double x_acc = temp - ml * theta_acc * cos_t / total_mass;
      d << s[1], x_acc, s[3], theta_acc;
      break;
    }
    case EnvTag::LaneFollow: {
      double steer = cfg_.steer_max * a[0];
      double accel = cfg_.accel_max * a[1];
      double theta = s[1], v = s[2];
      double beta =
          std::atan(cfg_.axle_rear / (cfg_.axle_front + cfg_.axle_rear) * std::tan(steer));
      // lateral deviation rate; heading is relative to the lane
      d << v * std::sin(theta + beta), v / cfg_.axle_rear * std::sin(beta), accel;
      break;
    }
    case EnvTag::Quad2D:
    case EnvTag::Quad2DNl: {
      double g = cfg_.quad_gravity, m = cfg_.q2_mass;
      double hover = m * g / 2.0;
      double u1 = std::clamp(hover * (1.0 + a[0]), 0.0, m * g);
      double u2 = std::clamp(hover * (1.0 + a[1]), 0.0, m * g);
      double theta = s[2];
      d << s[3], s[4], s[5], -(u1 + u2) * std::sin(theta) / m,
          (u1 + u2) * std::cos(theta) / m - g, (u1 - u2) * cfg_.q2_arm / cfg_.q2_inertia;
      break;
    }
    case EnvTag::Quad3D: {
      double g = cfg_.quad_gravity, m = cfg_.q3_mass;
      double hover = m * g / 4.0;
      Eigen::Vector4d f;
      for (int i = 0; i < 4; ++i) f[i] = std::clamp(hover * (1.0 + a[i]), 0.0, m * g / 2.0);
      double thrust = f.sum();
      double L = cfg_.q3_arm, cyaw = cfg_.q3_yaw_coeff;
      Eigen::Vector3d tau(L * (f[0] - f[2]), L * (f[1] - f[3]), cyaw * (f[0] - f[1] + f[2] - f[3]));
      double phi = s[3], theta = s[4], psi = s[5];
      Eigen::Matrix3d R = (Eigen::AngleAxisd(psi, Eigen::Vector3d::UnitZ()) *
                           Eigen::AngleAxisd(theta, Eigen::Vector3d::UnitY()) *
                           Eigen::AngleAxisd(phi, Eigen::Vector3d::UnitX()))
                              .toRotationMatrix();
      Eigen::Vector3d accel = Eigen::Vector3d(0, 0, -g) + R * Eigen::Vector3d(0, 0, thrust) / m;
      Eigen::Vector3d w = s.segment<3>(9);
      double sp = std::sin(phi), cp = std::cos(phi);
      double ct = std::cos(theta);
      if (std::abs(ct) < 1e-3) ct = (ct >= 0 ? 1e-3 : -1e-3);
      double tt = std::tan(theta);
      double phi_dot = w[0] + sp * tt * w[1] + cp * tt * w[2];
      double theta_dot = cp * w[1] - sp * w[2];
      double psi_dot = (sp * w[1] + cp * w[2]) / ct;
      Eigen::Vector3d I = cfg_.q3_inertia;
      Eigen::Vector3d Iw(I[0] * w[0], I[1] * w[1], I[2] * w[2]);
      Eigen::Vector3d w_dot = (tau - w.cross(Iw)).cwiseQuotient(I);
      d << s.segment<3>(6), phi_dot, theta_dot, psi_dot, accel, w_dot;
      break;
    }
  }
  return d;
}

bool Env::at_goal(const Eigen::VectorXd& state) const {
  if (cfg_.goal.size() == 0) return false;
  return (state.head(cfg_.goal.size()) - cfg_.goal).norm() <= cfg_.goal_radius;
}

std::pair<double, int> Env::reward_cost(const Eigen::VectorXd& state, const Eigen::VectorXd& action,
                                        const Eigen::VectorXd& next_state, int t_next) const {
  int cost = safety::is_safe(spec_, next_state, t_next) ? 0 : 1;
  double reward = 0.0;
  switch (tag_) {
    case EnvTag::CartPole:
      reward = cost ? 0.0 : 1.0;
      break;
    case EnvTag::LaneFollow: {
      double x = next_state[0], theta = next_state[1];
      reward = -(x * x + 0.5 * (theta / cfg_.heading_max) * (theta / cfg_.heading_max)) + 0.1;
      break;
    }
    case EnvTag::Quad2D:
    case EnvTag::Quad2DNl: {
      double d_before = (state.head(2) - cfg_.goal).norm();
      double d_after = (next_state.head(2) - cfg_.goal).norm();
      reward = (d_before - d_after) - 0.001 * action.squaredNorm() -
               0.01 * (std::abs(next_state[2]) > kPi / 6.0 ? 1.0 : 0.0);
      if (at_goal(next_state)) reward += cfg_.goal_bonus;
      break;
    }
    case EnvTag::Quad3D: {
      double d_before = (state.head(3) - cfg_.goal).norm();
      double d_after = (next_state.head(3) - cfg_.goal).norm();
      double phi = next_state[3], theta = next_state[4];
      reward = (d_before - d_after) - 0.005 * action.squaredNorm() -
               0.05 * (phi * phi + theta * theta);
      if (at_goal(next_state)) reward += cfg_.goal_bonus;
      break;
    }
  }
  return {reward, cost};
}

StepResult Env::step(const Eigen::VectorXd& state, const Eigen::VectorXd& action, int t) const {
  if (state.size() != state_dim() || action.size() != action_dim())
    throw std::invalid_argument("Env::step: dimension mismatch");
  Eigen::VectorXd next = state + cfg_.dt * deriv(state, action);
  if (!next.allFinite()) throw std::runtime_error("Env::step: simulation diverged");
  StepResult r;
  auto [reward, cost] = reward_cost(state, action, next, t + 1);
  r.reward = reward;
  r.cost = cost;
  r.reached_goal = at_goal(next);
  r.terminated = (cost == 1) || r.reached_goal;
  r.obs = observe(next, t + 1);
  r.state = std::move(next);
  return r;
}

namespace {

// direction/distance features; direction defaults to e1 when degenerate
void compass(const Eigen::VectorXd& from, const Eigen::VectorXd& to, Eigen::VectorXd& dir,
             double& dist) {
  Eigen::VectorXd diff = to - from;
  dist = diff.norm();
  dir = Eigen::VectorXd::Zero(from.size());
  if (dist < 1e-9)
    dir[0] = 1.0;
  else
    dir = diff / dist;
}

}  // namespace

Eigen::VectorXd Env::observe(const Eigen::VectorXd& state, int t) const {
  switch (tag_) {
    case EnvTag::CartPole:
    case EnvTag::LaneFollow: return state;
    case EnvTag::Quad2D:
    case EnvTag::Quad3D: {
      int pdim = (tag_ == EnvTag::Quad2D) ? 2 : 3;
      Eigen::VectorXd pos = state.head(pdim);
      Eigen::VectorXd gdir;
      double gdist;
      compass(pos, cfg_.goal, gdir, gdist);
      int nearest = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < cfg_.hazards.size(); ++i) {
        double d = (cfg_.hazards[i].pos - pos).norm();
        if (d < best) {
          best = d;
          nearest = static_cast<int>(i);
        }
      }
      Eigen::VectorXd hdir;
      double hdist;
      compass(pos, cfg_.hazards[nearest].pos, hdir, hdist);
      Eigen::VectorXd obs(obs_dim());
      obs << state, gdir, gdist, hdir, hdist;
      return obs;
    }
    case EnvTag::Quad2DNl: {
      Eigen::VectorXd pos = state.head(2);
      Eigen::VectorXd gdir;
      double gdist;
      compass(pos, cfg_.goal, gdir, gdist);
      const auto& dr = std::get<safety::DistanceRow>(spec_.rows.back());
      Eigen::VectorXd obs(obs_dim());
      obs << state, gdir, gdist, dr.obstacle.at(t);
      return obs;
    }
  }
  return state;
}

Var Env::observe_var(Tape& tape, Var state, int t) const {
  switch (tag_) {
    case EnvTag::CartPole:
    case EnvTag::LaneFollow: return state;
    default: break;
  }
  int pdim = (tag_ == EnvTag::Quad3D) ? 3 : 2;
  Var pos = nn::slice(tape, state, 0, pdim);
  Var one = tape.scalar(1.0);
  auto compass_var = [&](const Eigen::VectorXd& target, Var& dir, Var& dist) {
    Var diff = nn::sub(tape, tape.leaf(target), pos);
    dist = nn::norm2(tape, diff);
    if (tape.sval(dist) < 1e-9) {
      Eigen::VectorXd e1 = Eigen::VectorXd::Zero(pdim);
      e1[0] = 1.0;
      dir = tape.leaf(e1);
    } else {
      dir = nn::smul(tape, nn::cdiv(tape, one, dist), diff);
    }
  };
  Var gdir, gdist;
  compass_var(cfg_.goal, gdir, gdist);
  if (tag_ == EnvTag::Quad2DNl) {
    const auto& dr = std::get<safety::DistanceRow>(spec_.rows.back());
    return nn::concat(tape, {state, gdir, gdist, tape.leaf(dr.obstacle.at(t))});
  }
  const Eigen::VectorXd pos_val = tape.val(state).head(pdim);
  int nearest = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cfg_.hazards.size(); ++i) {
    double d = (cfg_.hazards[i].pos - pos_val).norm();
    if (d < best) {
      best = d;
      nearest = static_cast<int>(i);
    }
  }
  Var hdir, hdist;
  compass_var(cfg_.hazards[nearest].pos, hdir, hdist);
  return nn::concat(tape, {state, gdir, gdist, hdir, hdist});
}

}  // namespace csrl::env
