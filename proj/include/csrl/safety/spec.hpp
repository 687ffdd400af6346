#pragma once

#include <Eigen/Core>
#include <variant>
#include <vector>

#include "csrl/nn/tape.hpp"

namespace csrl::safety {

// h_i(s) = a . s - b, safe when <= 0.
struct AffineRow {
  Eigen::VectorXd a;
  double b = 0.0;
};

// Obstacle position, optionally periodic in the step index:
// p(t) = base + (amp_x cos(omega t), amp_y sin(omega t), 0...).
struct ObstaclePath {
  Eigen::VectorXd base;
  bool moving = false;
  double amp_x = 0.0, amp_y = 0.0, omega = 0.0;

  Eigen::VectorXd at(int t) const;
};

// h_i(s) = d_safe - || s[pos_dims] - p_o(t) ||_2, safe when <= 0.
struct DistanceRow {
  std::vector<int> pos_dims;
  ObstaclePath obstacle;
  double d_safe = 0.0;
};

using Row = std::variant<AffineRow, DistanceRow>;

// Axis-aligned box over the state space: the conformal reachable set at one
// step.
struct ReachBox {
  Eigen::VectorXd center;
  Eigen::VectorXd radii;
};

struct SafetySpec {
  int state_dim = 0;
  std::vector<Row> rows;

  int num_rows() const { return static_cast<int>(rows.size()); }
};

// Constraint values at a state; h <= 0 elementwise means safe.
Eigen::VectorXd h(const SafetySpec& spec, const Eigen::VectorXd& state, int t = 0);

bool is_safe(const SafetySpec& spec, const Eigen::VectorXd& state, int t = 0);

// Exact worst case of max_i h_i over the box. Affine rows in closed form,
// distance rows via per-coordinate clamping of the obstacle onto the box.
double g_box(const SafetySpec& spec, const ReachBox& box, int t = 0);

// Differentiable-a.e. version of g_box in (center, radii).
nn::Var g_box_var(nn::Tape& tape, const SafetySpec& spec, nn::Var center, nn::Var radii, int t = 0);

// phi_j = prod_i (|d hbar_i / d s_j| / |b_i| + 1), distance-row gradients
// averaged in absolute value over sample_states. Throws if a row has a zero
// offset (spec must be shifted first).
Eigen::VectorXd phi_weights(const SafetySpec& spec,
                            const std::vector<Eigen::VectorXd>& sample_states);

}  // namespace csrl::safety
