#include "csrl/safety/spec.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace csrl::safety {

using nn::Tape;
using nn::Var;

Eigen::VectorXd ObstaclePath::at(int t) const {
  if (!moving) return base;
  Eigen::VectorXd p = base;
  p[0] += amp_x * std::cos(omega * t);
  p[1] += amp_y * std::sin(omega * t);
  return p;
}

namespace {

Eigen::VectorXd gather(const Eigen::VectorXd& s, const std::vector<int>& dims) {
  Eigen::VectorXd out(dims.size());
  for (std::size_t k = 0; k < dims.size(); ++k) out[k] = s[dims[k]];
  return out;
}

}  // namespace

Eigen::VectorXd h(const SafetySpec& spec, const Eigen::VectorXd& state, int t) {
  if (state.size() != spec.state_dim) throw std::invalid_argument("h: state dimension mismatch");
  Eigen::VectorXd out(spec.num_rows());
  for (int i = 0; i < spec.num_rows(); ++i) {
    if (const auto* aff = std::get_if<AffineRow>(&spec.rows[i])) {
      out[i] = aff->a.dot(state) - aff->b;
    } else {
      const auto& dr = std::get<DistanceRow>(spec.rows[i]);
      Eigen::VectorXd p = gather(state, dr.pos_dims);
      out[i] = dr.d_safe - (p - dr.obstacle.at(t)).norm();
    }
  }
  return out;
}

bool is_safe(const SafetySpec& spec, const Eigen::VectorXd& state, int t) {
  return (h(spec, state, t).array() <= 0.0).all();
}

double g_box(const SafetySpec& spec, const ReachBox& box, int t) {
  if (box.center.size() != spec.state_dim || box.radii.size() != spec.state_dim)
    throw std::invalid_argument("g_box: dimension mismatch");
  double g = -std::numeric_limits<double>::infinity();
  for (const Row& row : spec.rows) {
    double v;
    if (const auto* aff = std::get_if<AffineRow>(&row)) {
      v = aff->a.dot(box.center) + aff->a.cwiseAbs().dot(box.radii) - aff->b;
    } else {
      const auto& dr = std::get<DistanceRow>(row);
      Eigen::VectorXd c = gather(box.center, dr.pos_dims);
      Eigen::VectorXd r = gather(box.radii, dr.pos_dims);
      Eigen::VectorXd po = dr.obstacle.at(t);
      // nearest point of the box to the obstacle
      Eigen::VectorXd nearest = po.cwiseMax(c - r).cwiseMin(c + r);
      v = dr.d_safe - (nearest - po).norm();
    }
    g = std::max(g, v);
  }
  return g;
}

Var g_box_var(Tape& tape, const SafetySpec& spec, Var center, Var radii, int t) {
  Var g{};
  for (const Row& row : spec.rows) {
    Var v{};
    if (const auto* aff = std::get_if<AffineRow>(&row)) {
      Var ca = tape.leaf(aff->a);
      Var cabs = tape.leaf(aff->a.cwiseAbs());
      v = nn::add_const(tape, nn::add(tape, nn::vdot(tape, ca, center), nn::vdot(tape, cabs, radii)),
                        -aff->b);
    } else {
      const auto& dr = std::get<DistanceRow>(row);
      std::vector<Var> cs, rs;
      for (int d : dr.pos_dims) {
        cs.push_back(nn::slice(tape, center, d, 1));
        rs.push_back(nn::slice(tape, radii, d, 1));
      }
      Var c = nn::concat(tape, cs);
      Var r = nn::concat(tape, rs);
      Var po = tape.leaf(dr.obstacle.at(t));
      Var nearest = nn::cmin(tape, nn::cmax(tape, po, nn::sub(tape, c, r)), nn::add(tape, c, r));
      Var dist = nn::norm2(tape, nn::sub(tape, nearest, po));
      v = nn::add_const(tape, nn::neg(tape, dist), dr.d_safe);
    }
    g = g.valid() ? nn::maxs(tape, g, v) : v;
  }
  return g;
}

Eigen::VectorXd phi_weights(const SafetySpec& spec,
                            const std::vector<Eigen::VectorXd>& sample_states) {
  Eigen::VectorXd phi = Eigen::VectorXd::Ones(spec.state_dim);
  for (const Row& row : spec.rows) {
    Eigen::VectorXd grad_abs = Eigen::VectorXd::Zero(spec.state_dim);
    double offset;
    if (const auto* aff = std::get_if<AffineRow>(&row)) {
      offset = -aff->b;  // h = hbar + b_i with hbar = a.s
      grad_abs = aff->a.cwiseAbs();
    } else {
      const auto& dr = std::get<DistanceRow>(row);
      offset = dr.d_safe;  // hbar = -||p_a - p_o||
      if (sample_states.empty())
        throw std::invalid_argument("phi_weights: distance rows need sample states");
      for (const Eigen::VectorXd& s : sample_states) {
        Eigen::VectorXd p = gather(s, dr.pos_dims);
        Eigen::VectorXd d = p - dr.obstacle.at(0);
        double norm = d.norm();
        if (norm < 1e-12) continue;
        for (std::size_t k = 0; k < dr.pos_dims.size(); ++k)
          grad_abs[dr.pos_dims[k]] += std::abs(d[k] / norm);
      }
      grad_abs /= static_cast<double>(sample_states.size());
    }
    if (offset == 0.0)
      throw std::invalid_argument("phi_weights: constraint offset is zero, shift the spec");
    phi = (phi.array() * (grad_abs.array() / std::abs(offset) + 1.0)).matrix();
  }
  return phi;
}

}  // namespace csrl::safety
