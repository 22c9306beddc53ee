#include "sts/planner.hpp"

#include <cmath>

namespace sts::planner {

using dynamics::ParamVector;
using dynamics::link_coefficients;

PlanSpec PlanSpec::make_default(const ParamVector& p) {
  PlanSpec spec;
  Vec6 x0;
  x0 << deg2rad(90.0), deg2rad(-90.0), deg2rad(90.0), 0.0, 0.0, 0.0;
  const Vec4 zeta0 = dynamics::com_kinematics(x0, p);
  spec.z_start << x0[1], zeta0[0], zeta0[1];
  spec.z_end << deg2rad(-5.0), 0.0, 0.97;
  spec.input_weight << 1.0, 1.0, 10.0, 1.0;
  spec.input_lower << -200.0, -175.0, -40.0, 0.0;
  spec.input_upper << 200.0, 50.0, 40.0, 650.0;
  spec.params = p;
  return spec;
}

CubicBlend cubic_blend(double t, double t0, double tf) {
  const double span = tf - t0;
  if (!(span > 0.0)) throw Error("cubic_blend: need tf > t0");
  const double s = std::clamp((t - t0) / span, 0.0, 1.0);
  CubicBlend b;
  b.value = s * s * (3.0 - 2.0 * s);
  b.d1 = 6.0 * s * (1.0 - s) / span;
  b.d2 = (6.0 - 12.0 * s) / (span * span);
  return b;
}

ZState z_reference(const PlanSpec& spec, double t) {
  const CubicBlend b = cubic_blend(t, spec.t0, spec.tf);
  const Vec3 delta = spec.z_end - spec.z_start;
  ZState zs;
  zs.z = spec.z_start + b.value * delta;
  zs.zd = b.d1 * delta;
  zs.zdd = b.d2 * delta;
  return zs;
}

namespace {

// Inverse-cosine/sine argument with a roundoff guard; anything further out is
// a genuine branch violation.
double checked_clamp(double v, const char* what) {
  if (std::abs(v) > 1.0 + 1e-9)
    throw SingularConfiguration(std::string("z_to_theta: ") + what + " left [-1, 1]");
  return std::clamp(v, -1.0, 1.0);
}

}  // namespace

JointState z_to_theta(const ZState& zs, const ParamVector& p) {
  const auto k = link_coefficients(p);
  const double theta2 = zs.z[0];
  const double x = zs.z[1];
  const double y = zs.z[2];

  const double rho2 = x * x + y * y;
  if (rho2 < 1e-18) throw SingularConfiguration("z_to_theta: center of mass at the ankle");
  const double rho = std::sqrt(rho2);

  // Distance from the ankle to the partial center of mass of the lower two
  // links, scaled by k0.
  const double g2 = k.k1 * k.k1 + k.k2 * k.k2 + 2.0 * k.k1 * k.k2 * std::cos(theta2);
  if (g2 < 1e-18) throw SingularConfiguration("z_to_theta: degenerate lower-link geometry");
  const double g = std::sqrt(g2);

  const double cos_phi =
      checked_clamp((k.k0 * k.k3 * k.k0 * k.k3 - k.k0 * k.k0 * g2 - rho2) /
                        (-2.0 * k.k0 * g * rho),
                    "cos phi");
  const double phi = std::acos(cos_phi);
  const double sin_varphi = checked_clamp(k.k2 * std::sin(theta2 - kPi) / g, "sin varphi");
  const double varphi = std::asin(sin_varphi);
  const double sin_psi = checked_clamp(g * std::sin(phi) / k.k3, "sin psi");
  const double psi = std::asin(sin_psi);
  const double beta = std::atan2(y, x);

  JointState js;
  js.theta[0] = beta - phi + varphi;
  js.theta[1] = theta2;
  js.theta[2] = beta + psi - (js.theta[0] + theta2);

  const double t12 = js.theta[0] + js.theta[1];
  const double t123 = t12 + js.theta[2];
  const double s12 = std::sin(t12), c12 = std::cos(t12);
  const double s123 = std::sin(t123), c123 = std::cos(t123);

  // Velocity map for [thetad1, thetad3] given the task rates.
  Mat2 b;
  b << -y, -k.k0 * k.k3 * s123, x, k.k0 * k.k3 * c123;
  const double det = b(0, 0) * b(1, 1) - b(0, 1) * b(1, 0);
  if (std::abs(det) < 1e-10) throw SingularConfiguration("z_to_theta: singular velocity map");
  Mat2 binv;
  binv << b(1, 1), -b(0, 1), -b(1, 0), b(0, 0);
  binv /= det;

  const double w2 = zs.zd[0];
  Vec2 rate_rhs;
  rate_rhs << zs.zd[1] - k.k0 * w2 * (-(k.k2 * s12 + k.k3 * s123)),
      zs.zd[2] - k.k0 * w2 * (k.k2 * c12 + k.k3 * c123);
  const Vec2 w13 = binv * rate_rhs;
  js.thetad << w13[0], w2, w13[1];

  // Acceleration terms: centripetal, cross, and commanded theta2dd pieces.
  const double w1 = js.thetad[0];
  const double w3 = js.thetad[2];
  Vec2 a;
  a[0] = -(x * w1 * w1 + k.k0 * (k.k2 * c12 + k.k3 * c123) * w2 * w2 +
           k.k0 * k.k3 * c123 * w3 * w3) -
         2.0 * k.k0 * w1 * w2 * (k.k2 * c12 + k.k3 * c123) -
         2.0 * k.k0 * k.k3 * (w1 + w2) * w3 * c123 +
         k.k0 * zs.zdd[0] * (-(k.k2 * s12 + k.k3 * s123));
  a[1] = -(y * w1 * w1 + k.k0 * (k.k2 * s12 + k.k3 * s123) * w2 * w2 +
           k.k0 * k.k3 * s123 * w3 * w3) -
         2.0 * k.k0 * w1 * w2 * (k.k2 * s12 + k.k3 * s123) -
         2.0 * k.k0 * k.k3 * (w1 + w2) * w3 * s123 +
         k.k0 * zs.zdd[0] * (k.k2 * c12 + k.k3 * c123);
  Vec2 acc_rhs;
  acc_rhs << zs.zdd[1] - a[0], zs.zdd[2] - a[1];
  const Vec2 acc13 = binv * acc_rhs;
  js.thetadd << acc13[0], zs.zdd[0], acc13[1];
  return js;
}

Vec4 allocate_input(const JointState& js, const PlanSpec& spec) {
  const Vec3 rhs = dynamics::mass_matrix(js.theta, spec.params) * js.thetadd +
                   dynamics::bias_forces(js.theta, js.thetad, spec.params);
  const MatX a_tau = dynamics::force_matrix(js.theta, spec.params);
  const numerics::IntervalBox box(spec.input_lower, spec.input_upper);
  return numerics::solve_allocation_qp(spec.input_weight, a_tau, rhs, box);
}

ReferenceBundle build_reference(const PlanSpec& spec) {
  const auto grid = spec.grid();
  const auto n = grid.size();
  MatX state(6, n), input(4, n), output(4, n), acc(3, n);
  for (std::size_t i = 0; i < n; ++i) {
    const ZState zs = z_reference(spec, grid.node(i));
    const JointState js = z_to_theta(zs, spec.params);
    Vec6 x;
    x << js.theta, js.thetad;
    state.col(i) = x;
    input.col(i) = allocate_input(js, spec);
    output.col(i) = dynamics::com_kinematics(x, spec.params);
    acc.col(i) = js.thetadd;
  }
  ReferenceBundle ref;
  ref.state = numerics::Trajectory(grid, std::move(state));
  ref.input = numerics::Trajectory(grid, std::move(input));
  ref.output = numerics::Trajectory(grid, std::move(output));
  ref.joint_acc = numerics::Trajectory(grid, std::move(acc));
  ref.params = spec.params;
  return ref;
}

}  // namespace sts::planner
