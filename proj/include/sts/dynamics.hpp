#pragma once

#include "sts/types.hpp"

namespace sts::dynamics {

// Physical parameters of the three-link chain (shank+leg, thigh, upper body),
// ordered masses, inertias, link lengths, center-of-mass offsets.
struct ParamVector {
  double m1, m2, m3;     // kg
  double I1, I2, I3;     // kg m^2
  double l1, l2, l3;     // m
  double lc1, lc2, lc3;  // m

  static ParamVector from_vector(const Vec12& v);
  Vec12 to_vector() const;

  // Positive masses/inertias/lengths and lc_i <= l_i.
  bool valid() const;
};

// Lumped coefficients reused across the model: k0 the reciprocal total mass,
// k1..k3 first moments of the distal chain about each joint.
struct LinkCoefficients {
  double k0, k1, k2, k3;
};
LinkCoefficients link_coefficients(const ParamVector& p);

// Joint-space inertia matrix, symmetric positive definite for valid p.
Mat3 mass_matrix(const Vec3& theta, const ParamVector& p);

// Velocity products plus gravity load. The gravity override exists for
// conservation checks; leave it at default otherwise.
Vec3 bias_forces(const Vec3& theta, const Vec3& omega, const ParamVector& p,
                 double gravity = kGravity);

// Maps the input [tau_h, tau_s, F_x, F_y] (hip torque, shoulder torque,
// horizontal/vertical assistance force at the shoulder) to joint torques.
Mat34 force_matrix(const Vec3& theta, const ParamVector& p);

// Full state derivative of x = [theta; omega] under input u.
Vec6 state_derivative(const Vec6& x, const ParamVector& p, const Vec4& u,
                      double gravity = kGravity);

// Center-of-mass position and velocity zeta = [x, y, xdot, ydot].
Vec4 com_kinematics(const Vec6& x, const ParamVector& p);

// User-visible outputs Upsilon = [theta3, x_com, y_com, omega3, xdot_com, ydot_com].
Vec6 user_output(const Vec6& x, const ParamVector& p);

// Kinetic plus potential energy; the conservation tests lean on it.
double total_energy(const Vec6& x, const ParamVector& p, double gravity = kGravity);

}  // namespace sts::dynamics
