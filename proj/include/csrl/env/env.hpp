#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "csrl/nn/tape.hpp"
#include "csrl/rng.hpp"
#include "csrl/safety/spec.hpp"

namespace csrl::env {

enum class EnvTag { CartPole, LaneFollow, Quad2D, Quad3D, Quad2DNl };

struct Hazard {
  Eigen::VectorXd pos;
  double radius = 0.0;
};

struct StepResult {
  Eigen::VectorXd state;
  Eigen::VectorXd obs;
  double reward = 0.0;
  int cost = 0;
  bool terminated = false;
  bool reached_goal = false;
};

struct EnvConfig {
  double dt = 0.05;
  int max_steps = 500;

  Eigen::VectorXd init_lo, init_hi;

  // cartpole
  double gravity = 9.8, cart_mass = 1.0, pole_mass = 0.1, pole_half_len = 0.5, force_mag = 10.0;
  double theta_max = 0.2, x_max = 2.4;

  // lane follow
  double axle_front = 1.45, axle_rear = 1.45;
  double steer_max = 0.5235987755982988;  // pi/6 actuator limit
  double accel_max = 2.0;
  double lat_max = 0.7, heading_max = 0.7853981633974483;  // pi/4

  // quadrotors
  double quad_gravity = 9.81;
  double q2_mass = 1.0, q2_inertia = 0.01, q2_arm = 0.25, q2_angle_max = 1.0471975511965976;
  double q3_mass = 0.468, q3_arm = 0.225, q3_yaw_coeff = 0.01;
  Eigen::Vector3d q3_inertia{4.9e-3, 4.9e-3, 4.8e-3};
  double q3_angle_max = 1.2566370614359172;  // pi/2.5
  double pos_bound_xy = 6.0, pos_bound_y2d = 4.0;

  std::vector<Hazard> hazards;
  double hazard_buffer = 0.1;
  Eigen::VectorXd goal;
  double goal_radius = 0.3;
  double goal_bonus = 10.0;

  // moving obstacle (nonlinear quad2d)
  double obs_amp_x = 1.5, obs_amp_y = 1.2, obs_omega = 0.05, d_safe = 0.5;
};

EnvTag env_tag_from_name(const std::string& name);
std::string env_name(EnvTag tag);

// Environments are value-like: step is a pure function of (state, action,
// config, step index). The step index only matters for the moving-obstacle
// variant.
class Env {
public:
  static Env make(const std::string& name);
  static Env make(EnvTag tag, EnvConfig cfg);

  EnvTag tag() const { return tag_; }
  const EnvConfig& config() const { return cfg_; }
  const std::string& name() const { return name_; }

  int state_dim() const;
  int action_dim() const;
  int obs_dim() const;

  Eigen::VectorXd reset(Rng& rng) const;
  StepResult step(const Eigen::VectorXd& state, const Eigen::VectorXd& action, int t) const;
  Eigen::VectorXd observe(const Eigen::VectorXd& state, int t) const;
  nn::Var observe_var(nn::Tape& tape, nn::Var state, int t) const;

  // ODE right-hand side (state derivative), exposed for golden-value tests.
  Eigen::VectorXd deriv(const Eigen::VectorXd& state, const Eigen::VectorXd& action) const;

  const safety::SafetySpec& safety_spec() const { return spec_; }

  std::pair<double, int> reward_cost(const Eigen::VectorXd& state, const Eigen::VectorXd& action,
                                     const Eigen::VectorXd& next_state, int t_next) const;

private:
  Env(EnvTag tag, EnvConfig cfg);
  void build_spec();
  Eigen::VectorXd actuate(const Eigen::VectorXd& action) const;
  bool at_goal(const Eigen::VectorXd& state) const;

  EnvTag tag_;
  EnvConfig cfg_;
  std::string name_;
  safety::SafetySpec spec_;
};

EnvConfig default_config(EnvTag tag);

}  // namespace csrl::env
