#pragma once

#include "sts/dynamics.hpp"
#include "sts/numerics.hpp"
#include "sts/types.hpp"

namespace sts::planner {

// Everything the reference generator needs: timing, start/end task postures,
// input box and allocation weighting, model parameters the plan is built for.
struct PlanSpec {
  double t0 = 0.0;
  double tf = 3.5;
  double step = 0.004;
  Vec3 z_start;  // [theta2, x_com, y_com] at t0
  Vec3 z_end;    // same at tf
  Vec4 input_weight;
  Vec4 input_lower;
  Vec4 input_upper;
  dynamics::ParamVector params;

  // Seated-to-standing defaults for the nominal model; the start posture is
  // taken from the model's own center of mass so the roundtrip is exact.
  static PlanSpec make_default(const dynamics::ParamVector& p);

  numerics::TimeGrid grid() const { return numerics::TimeGrid::uniform(t0, tf, step); }
};

struct CubicBlend {
  double value;
  double d1;
  double d2;
};

// Smooth 0-to-1 blend with zero end rates: 3 (t/tf)^2 - 2 (t/tf)^3 shifted to
// an arbitrary span.
CubicBlend cubic_blend(double t, double t0, double tf);

struct ZState {
  Vec3 z;
  Vec3 zd;
  Vec3 zdd;
};

// Task-space reference at time t.
ZState z_reference(const PlanSpec& spec, double t);

struct JointState {
  Vec3 theta;
  Vec3 thetad;
  Vec3 thetadd;
};

// Geometric task-to-joint transformation with consistent velocity and
// acceleration propagation. Throws SingularConfiguration when the pose leaves
// the valid branch (inverse-trig arguments outside [-1,1] beyond roundoff, or
// a singular velocity map).
JointState z_to_theta(const ZState& zs, const dynamics::ParamVector& p);

// Weighted min-norm input realizing the joint acceleration within the box.
Vec4 allocate_input(const JointState& js, const PlanSpec& spec);

// Reference trajectories sampled on the plan grid.
struct ReferenceBundle {
  numerics::Trajectory state;      // 6: joint angles and rates
  numerics::Trajectory input;      // 4: allocated inputs
  numerics::Trajectory output;     // 4: center-of-mass position and velocity
  numerics::Trajectory joint_acc;  // 3: reference joint accelerations
  dynamics::ParamVector params;    // model the plan was built for
};

ReferenceBundle build_reference(const PlanSpec& spec);

}  // namespace sts::planner
