#include "sts/dynamics.hpp"

#include <cmath>

namespace sts::dynamics {

ParamVector ParamVector::from_vector(const Vec12& v) {
  return ParamVector{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11]};
}

Vec12 ParamVector::to_vector() const {
  Vec12 v;
  v << m1, m2, m3, I1, I2, I3, l1, l2, l3, lc1, lc2, lc3;
  return v;
}

bool ParamVector::valid() const {
  const Vec12 v = to_vector();
  for (int i = 0; i < 12; ++i)
    if (!(v[i] > 0.0) || !std::isfinite(v[i])) return false;
  return lc1 <= l1 && lc2 <= l2 && lc3 <= l3;
}

LinkCoefficients link_coefficients(const ParamVector& p) {
  LinkCoefficients k;
  k.k0 = 1.0 / (p.m1 + p.m2 + p.m3);
  k.k1 = p.lc1 * p.m1 + p.l1 * p.m2 + p.l1 * p.m3;
  k.k2 = p.lc2 * p.m2 + p.l2 * p.m3;
  k.k3 = p.lc3 * p.m3;
  return k;
}

Mat3 mass_matrix(const Vec3& theta, const ParamVector& p) {
  const double c2 = std::cos(theta[1]);
  const double c3 = std::cos(theta[2]);
  const double c23 = std::cos(theta[1] + theta[2]);
  const double i123 = p.I1 + p.I2 + p.I3;
  const double i23 = p.I2 + p.I3;

  Mat3 m;
  m(0, 0) = i123 + p.lc1 * p.lc1 * p.m1 +
            p.m2 * (p.l1 * p.l1 + 2.0 * p.l1 * p.lc2 * c2 + p.lc2 * p.lc2) +
            p.m3 * (p.l1 * p.l1 + 2.0 * p.l1 * p.l2 * c2 + 2.0 * p.l1 * p.lc3 * c23 +
                    p.l2 * p.l2 + 2.0 * p.l2 * p.lc3 * c3 + p.lc3 * p.lc3);
  m(0, 1) = i23 + p.lc2 * p.m2 * (p.l1 * c2 + p.lc2) +
            p.m3 * (p.l1 * p.l2 * c2 + p.l1 * p.lc3 * c23 + p.l2 * p.l2 +
                    2.0 * p.l2 * p.lc3 * c3 + p.lc3 * p.lc3);
  m(0, 2) = p.I3 + p.lc3 * p.m3 * (p.l1 * c23 + p.l2 * c3 + p.lc3);
  m(1, 1) = i23 + p.lc2 * p.lc2 * p.m2 +
            p.m3 * (p.l2 * p.l2 + 2.0 * p.l2 * p.lc3 * c3 + p.lc3 * p.lc3);
  m(1, 2) = p.I3 + p.lc3 * p.m3 * (p.l2 * c3 + p.lc3);
  m(2, 2) = p.I3 + p.lc3 * p.lc3 * p.m3;
  m(1, 0) = m(0, 1);
  m(2, 0) = m(0, 2);
  m(2, 1) = m(1, 2);
  return m;
}

Vec3 bias_forces(const Vec3& theta, const Vec3& omega, const ParamVector& p, double gravity) {
  const auto k = link_coefficients(p);
  const double s2 = std::sin(theta[1]);
  const double s3 = std::sin(theta[2]);
  const double s23 = std::sin(theta[1] + theta[2]);
  const double c1 = std::cos(theta[0]);
  const double c12 = std::cos(theta[0] + theta[1]);
  const double c123 = std::cos(theta[0] + theta[1] + theta[2]);

  Mat3 coupling;
  coupling << p.l1 * (k.k2 * s2 + k.k3 * s23), -k.k2 * p.l1 * s2 + k.k3 * p.l2 * s3,
      -k.k3 * (p.l1 * s23 + p.l2 * s3),
      p.l1 * (k.k2 * s2 + k.k3 * s23), k.k3 * p.l2 * s3, -k.k3 * p.l2 * s3,
      p.l1 * k.k3 * s23, k.k3 * p.l2 * s3, 0.0;

  // Squared absolute link rates; the coupling matrix is written against them.
  Vec3 sq;
  const double w1 = omega[0];
  const double w12 = omega[0] + omega[1];
  const double w123 = omega[0] + omega[1] + omega[2];
  sq << w1 * w1, w12 * w12, w123 * w123;

  Vec3 grav;
  grav << k.k1 * c1 + k.k2 * c12 + k.k3 * c123, k.k2 * c12 + k.k3 * c123, k.k3 * c123;

  return coupling * sq + gravity * grav;
}

Mat34 force_matrix(const Vec3& theta, const ParamVector& p) {
  const double s1 = std::sin(theta[0]);
  const double s12 = std::sin(theta[0] + theta[1]);
  const double s123 = std::sin(theta[0] + theta[1] + theta[2]);
  const double c1 = std::cos(theta[0]);
  const double c12 = std::cos(theta[0] + theta[1]);
  const double c123 = std::cos(theta[0] + theta[1] + theta[2]);

  Mat34 a;
  a.col(0) << 0.0, 0.0, 1.0;
  a.col(1) << -1.0, -1.0, -1.0;
  a.col(2) << -(p.l1 * s1 + p.l2 * s12 + p.l3 * s123), -(p.l2 * s12 + p.l3 * s123), -p.l3 * s123;
  a.col(3) << p.l1 * c1 + p.l2 * c12 + p.l3 * c123, p.l2 * c12 + p.l3 * c123, p.l3 * c123;
  return a;
}

Vec6 state_derivative(const Vec6& x, const ParamVector& p, const Vec4& u, double gravity) {
  const Vec3 theta = x.head<3>();
  const Vec3 omega = x.tail<3>();
  const Vec3 rhs = force_matrix(theta, p) * u - bias_forces(theta, omega, p, gravity);
  const Vec3 accel = mass_matrix(theta, p).llt().solve(rhs);
  Vec6 dx;
  dx << omega, accel;
  if (!dx.allFinite()) throw NonFiniteState("state_derivative produced a non-finite value");
  return dx;
}

Vec4 com_kinematics(const Vec6& x, const ParamVector& p) {
  const auto k = link_coefficients(p);
  const double t1 = x[0], t12 = x[0] + x[1], t123 = x[0] + x[1] + x[2];
  const double w1 = x[3], w2 = x[4], w3 = x[5];
  const double c1 = std::cos(t1), c12 = std::cos(t12), c123 = std::cos(t123);
  const double s1 = std::sin(t1), s12 = std::sin(t12), s123 = std::sin(t123);

  Vec4 zeta;
  zeta[0] = k.k0 * (k.k1 * c1 + k.k2 * c12 + k.k3 * c123);
  zeta[1] = k.k0 * (k.k1 * s1 + k.k2 * s12 + k.k3 * s123);
  zeta[2] = -w1 * zeta[1] - w2 * k.k0 * (k.k2 * s12 + k.k3 * s123) - w3 * k.k0 * k.k3 * s123;
  zeta[3] = w1 * zeta[0] + w2 * k.k0 * (k.k2 * c12 + k.k3 * c123) + w3 * k.k0 * k.k3 * c123;
  return zeta;
}

Vec6 user_output(const Vec6& x, const ParamVector& p) {
  const Vec4 zeta = com_kinematics(x, p);
  Vec6 out;
  out << x[2], zeta[0], zeta[1], x[5], zeta[2], zeta[3];
  return out;
}

double total_energy(const Vec6& x, const ParamVector& p, double gravity) {
  const Vec3 theta = x.head<3>();
  const Vec3 omega = x.tail<3>();
  const double kinetic = 0.5 * omega.dot(mass_matrix(theta, p) * omega);
  const double s1 = std::sin(theta[0]);
  const double s12 = std::sin(theta[0] + theta[1]);
  const double s123 = std::sin(theta[0] + theta[1] + theta[2]);
  const double y1 = p.lc1 * s1;
  const double y2 = p.l1 * s1 + p.lc2 * s12;
  const double y3 = p.l1 * s1 + p.l2 * s12 + p.lc3 * s123;
  const double potential = gravity * (p.m1 * y1 + p.m2 * y2 + p.m3 * y3);
  return kinetic + potential;
}

}  // namespace sts::dynamics
