#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "csrl/env/env.hpp"

// Independent re-implementation of every right-hand side, written directly
// from the model equations in a different style than the library code. Shared
// by the unit tests and the acceptance checks.
inline Eigen::VectorXd oracle_rhs(const csrl::env::Env& e, const Eigen::VectorXd& s,
                                  const Eigen::VectorXd& a) {
  using namespace csrl::env;
  const EnvConfig& c = e.config();
  Eigen::VectorXd d(e.state_dim());
  switch (e.tag()) {
    case EnvTag::CartPole: {
      const double F = c.force_mag * a[0];
      const double M = c.cart_mass + c.pole_mass;
      const double st = std::sin(s[2]), ct = std::cos(s[2]);
      const double aux = (F + c.pole_mass * c.pole_half_len * s[3] * s[3] * st) / M;
      const double denom = c.pole_half_len * (4.0 / 3.0 - (c.pole_mass * ct * ct) / M);
      const double tacc = (c.gravity * st - ct * aux) / denom;
      d[0] = s[1];
      d[1] = aux - c.pole_mass * c.pole_half_len * tacc * ct / M;
      d[2] = s[3];
      d[3] = tacc;
      return d;
    }
    case EnvTag::LaneFollow: {
      const double delta = c.steer_max * a[0];
      const double beta = std::atan2(c.axle_rear * std::tan(delta), c.axle_front + c.axle_rear);
      d[0] = s[2] * std::sin(s[1] + beta);
      d[1] = (s[2] / c.axle_rear) * std::sin(beta);
      d[2] = c.accel_max * a[1];
      return d;
    }
    case EnvTag::Quad2D:
    case EnvTag::Quad2DNl: {
      const double mg = c.q2_mass * c.quad_gravity;
      auto clip = [&](double u) { return std::min(std::max(u, 0.0), mg); };
      const double u1 = clip(0.5 * mg * (1.0 + a[0]));
      const double u2 = clip(0.5 * mg * (1.0 + a[1]));
      d[0] = s[3];
      d[1] = s[4];
      d[2] = s[5];
      d[3] = -(u1 + u2) / c.q2_mass * std::sin(s[2]);
      d[4] = (u1 + u2) / c.q2_mass * std::cos(s[2]) - c.quad_gravity;
      d[5] = (u1 - u2) * c.q2_arm / c.q2_inertia;
      return d;
    }
    case EnvTag::Quad3D: {
      const double mg = c.q3_mass * c.quad_gravity;
      Eigen::Vector4d f;
      for (int i = 0; i < 4; ++i)
        f[i] = std::min(std::max(0.25 * mg * (1.0 + a[i]), 0.0), 0.5 * mg);
      const double cphi = std::cos(s[3]), sphi = std::sin(s[3]);
      const double cth = std::cos(s[4]), sth = std::sin(s[4]);
      const double cpsi = std::cos(s[5]), spsi = std::sin(s[5]);
      // explicit ZYX rotation entries (third column only is needed for thrust)
      const double r13 = cpsi * sth * cphi + spsi * sphi;
      const double r23 = spsi * sth * cphi - cpsi * sphi;
      const double r33 = cth * cphi;
      const double T = f.sum() / c.q3_mass;
      d[0] = s[6];
      d[1] = s[7];
      d[2] = s[8];
      const double wx = s[9], wy = s[10], wz = s[11];
      double ctg = cth;
      if (std::abs(ctg) < 1e-3) ctg = std::copysign(1e-3, ctg);
      d[3] = wx + (sphi * wy + cphi * wz) * (sth / ctg);
      d[4] = cphi * wy - sphi * wz;
      d[5] = (sphi * wy + cphi * wz) / ctg;
      d[6] = r13 * T;
      d[7] = r23 * T;
      d[8] = r33 * T - c.quad_gravity;
      const double Ix = c.q3_inertia[0], Iy = c.q3_inertia[1], Iz = c.q3_inertia[2];
      const double tx = c.q3_arm * (f[0] - f[2]);
      const double ty = c.q3_arm * (f[1] - f[3]);
      const double tz = c.q3_yaw_coeff * (f[0] - f[1] + f[2] - f[3]);
      d[9] = (tx - (Iz - Iy) * wy * wz) / Ix;
      d[10] = (ty - (Ix - Iz) * wx * wz) / Iy;
      d[11] = (tz - (Iy - Ix) * wx * wy) / Iz;
      return d;
    }
  }
  return d;
}
