#include "oracles.hpp"

#include <cmath>
#include <limits>

namespace sts::oracles {

using sts::dynamics::ParamVector;

namespace {

// Planar center-of-mass position of each link.
Vec2 link_com(int link, const Vec3& th, const ParamVector& p) {
  const double a1 = th[0], a2 = th[0] + th[1], a3 = th[0] + th[1] + th[2];
  switch (link) {
    case 0:
      return Vec2(p.lc1 * std::cos(a1), p.lc1 * std::sin(a1));
    case 1:
      return Vec2(p.l1 * std::cos(a1) + p.lc2 * std::cos(a2),
                  p.l1 * std::sin(a1) + p.lc2 * std::sin(a2));
    default:
      return Vec2(p.l1 * std::cos(a1) + p.l2 * std::cos(a2) + p.lc3 * std::cos(a3),
                  p.l1 * std::sin(a1) + p.l2 * std::sin(a2) + p.lc3 * std::sin(a3));
  }
}

// d(link_com)/d(theta), analytic.
Eigen::Matrix<double, 2, 3> link_com_jac(int link, const Vec3& th, const ParamVector& p) {
  const double a1 = th[0], a2 = th[0] + th[1], a3 = th[0] + th[1] + th[2];
  const Vec2 d1(-std::sin(a1), std::cos(a1));
  const Vec2 d2(-std::sin(a2), std::cos(a2));
  const Vec2 d3(-std::sin(a3), std::cos(a3));
  Eigen::Matrix<double, 2, 3> j = Eigen::Matrix<double, 2, 3>::Zero();
  switch (link) {
    case 0:
      j.col(0) = p.lc1 * d1;
      break;
    case 1:
      j.col(0) = p.l1 * d1 + p.lc2 * d2;
      j.col(1) = p.lc2 * d2;
      break;
    default:
      j.col(0) = p.l1 * d1 + p.l2 * d2 + p.lc3 * d3;
      j.col(1) = p.l2 * d2 + p.lc3 * d3;
      j.col(2) = p.lc3 * d3;
      break;
  }
  return j;
}

double potential(const Vec3& th, const ParamVector& p) {
  return p.m1 * link_com(0, th, p).y() + p.m2 * link_com(1, th, p).y() +
         p.m3 * link_com(2, th, p).y();
}

}  // namespace

Mat3 mass_matrix_energy(const Vec3& theta, const ParamVector& p) {
  const double masses[3] = {p.m1, p.m2, p.m3};
  const double inertias[3] = {p.I1, p.I2, p.I3};
  Mat3 m = Mat3::Zero();
  for (int link = 0; link < 3; ++link) {
    const auto jv = link_com_jac(link, theta, p);
    Eigen::RowVector3d jw = Eigen::RowVector3d::Zero();
    for (int q = 0; q <= link; ++q) jw[q] = 1.0;  // absolute angle is the partial sum
    m += masses[link] * jv.transpose() * jv + inertias[link] * jw.transpose() * jw;
  }
  return m;
}

Vec3 bias_forces_energy(const Vec3& theta, const Vec3& omega, const ParamVector& p,
                        double gravity) {
  const double h = 1e-6;
  Mat3 dm[3];
  Vec3 dv;
  for (int k = 0; k < 3; ++k) {
    Vec3 tp = theta, tm = theta;
    tp[k] += h;
    tm[k] -= h;
    dm[k] = (mass_matrix_energy(tp, p) - mass_matrix_energy(tm, p)) / (2.0 * h);
    dv[k] = (potential(tp, p) - potential(tm, p)) / (2.0 * h);
  }
  Mat3 mdot = Mat3::Zero();
  for (int k = 0; k < 3; ++k) mdot += dm[k] * omega[k];
  Vec3 dke;
  for (int k = 0; k < 3; ++k) dke[k] = 0.5 * omega.dot(dm[k] * omega);
  return mdot * omega - dke + gravity * dv;
}

Mat34 force_matrix_virtual_work(const Vec3& theta, const ParamVector& p) {
  const double h = 1e-6;
  // Shoulder point sits at the tip of the third link.
  const auto shoulder = [&](const Vec3& th) {
    const double a1 = th[0], a2 = th[0] + th[1], a3 = th[0] + th[1] + th[2];
    return Vec2(p.l1 * std::cos(a1) + p.l2 * std::cos(a2) + p.l3 * std::cos(a3),
                p.l1 * std::sin(a1) + p.l2 * std::sin(a2) + p.l3 * std::sin(a3));
  };
  Mat34 a;
  for (int k = 0; k < 3; ++k) {
    Vec3 tp = theta, tm = theta;
    tp[k] += h;
    tm[k] -= h;
    // Hip torque acts across the third joint coordinate itself.
    a(k, 0) = (tp[2] - tm[2]) / (2.0 * h);
    // Shoulder torque enters with a reaction sign on the absolute trunk angle.
    const double trunk_p = tp.sum(), trunk_m = tm.sum();
    a(k, 1) = -(trunk_p - trunk_m) / (2.0 * h);
    const Vec2 sp = shoulder(tp), sm = shoulder(tm);
    a(k, 2) = (sp.x() - sm.x()) / (2.0 * h);
    a(k, 3) = (sp.y() - sm.y()) / (2.0 * h);
  }
  return a;
}

bool allocation_brute_force(const VecX& w, const MatX& a_eq, const VecX& b_eq,
                            const sts::numerics::IntervalBox& box, VecX& best) {
  // Feasible set is a segment: particular solution plus the 1d kernel.
  const Eigen::CompleteOrthogonalDecomposition<MatX> cod(a_eq);
  const VecX xi_p = cod.solve(b_eq);
  if ((a_eq * xi_p - b_eq).lpNorm<Eigen::Infinity>() > 1e-9) return false;
  const Eigen::FullPivLU<MatX> lu(a_eq);
  const MatX kernel = lu.kernel();
  if (kernel.cols() != 1) return false;
  const VecX dir = kernel.col(0).normalized();

  double s_lo = -std::numeric_limits<double>::infinity();
  double s_hi = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double d = dir[i];
    if (std::abs(d) < 1e-14) {
      if (xi_p[i] < box.lower()[i] - 1e-9 || xi_p[i] > box.upper()[i] + 1e-9) return false;
      continue;
    }
    const double s1 = (box.lower()[i] - xi_p[i]) / d;
    const double s2 = (box.upper()[i] - xi_p[i]) / d;
    s_lo = std::max(s_lo, std::min(s1, s2));
    s_hi = std::min(s_hi, std::max(s1, s2));
  }
  if (!(s_lo <= s_hi)) return false;

  const auto cost = [&](double s) {
    return 0.5 * (w.cwiseProduct(xi_p + s * dir)).squaredNorm();
  };
  double lo = s_lo, hi = s_hi;
  double s_best = lo;
  for (int pass = 0; pass < 3; ++pass) {
    const int n = 20000;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= n; ++i) {
      const double s = lo + (hi - lo) * double(i) / double(n);
      const double c = cost(s);
      if (c < best_cost) {
        best_cost = c;
        s_best = s;
      }
    }
    const double cell = (hi - lo) / double(n);
    lo = std::max(s_lo, s_best - 2.0 * cell);
    hi = std::min(s_hi, s_best + 2.0 * cell);
  }
  best = xi_p + s_best * dir;
  return true;
}

}  // namespace sts::oracles
