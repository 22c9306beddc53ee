#pragma once

#include "sts/dynamics.hpp"
#include "sts/numerics.hpp"
#include "sts/planner.hpp"
#include "sts/types.hpp"

namespace sts::lqr {

// Jacobian schedules of the model along a reference: state, parameter, and
// input directions. The parameter block is produced for analysis even though
// gain synthesis only consumes A and B_input.
struct LinearizationSchedule {
  numerics::MatrixSchedule a;        // d f / d x
  numerics::MatrixSchedule b_param;  // d f / d p
  numerics::MatrixSchedule b_input;  // d f / d u
};

LinearizationSchedule linearize(const planner::ReferenceBundle& ref,
                                const dynamics::ParamVector& p);

// Diagonal weights for the finite-horizon tracking problem.
struct LqrWeights {
  VecX q;  // state running cost diagonal
  VecX r;  // input running cost diagonal
  VecX s;  // terminal cost diagonal
};

struct GainSchedule {
  numerics::MatrixSchedule gain;     // K(t), input x state
  numerics::MatrixSchedule riccati;  // P(t), state x state
};

struct RiccatiOptions {
  double blowup_norm = 1e12;
  // Small input weights make the quadratic term stiff near tf, so the sweep
  // runs adaptively and these tolerances govern it.
  double abs_tol = 1e-12;
  double rel_tol = 1e-10;
};

// Backward sweep of the matrix Riccati equation from P(tf) = diag(s),
// adaptive embedded Runge-Kutta in reversed time with linear interpolation of
// A and B between schedule nodes. Throws RiccatiBlowup when ||P|| escapes.
GainSchedule solve_riccati(const LinearizationSchedule& lin, const LqrWeights& w,
                           const RiccatiOptions& opts = {});

// Reference-tracking closed loop: u = u_hat(t) - K(t) (x - x_hat(t)), applied
// unsaturated to the model with parameter p.
Vec6 closed_loop_derivative(double t, const Vec6& x, const dynamics::ParamVector& p,
                            const planner::ReferenceBundle& ref, const GainSchedule& gains);

// Candidate weight triples drawn by one Latin hypercube over the stacked
// [q(6), r(4), s(6)] ranges.
struct WeightPoolRanges {
  double q_max = 100.0;
  double r_max = 0.01;
  double s_max = 100.0;
};
std::vector<LqrWeights> sample_weight_pool(int count, const WeightPoolRanges& ranges,
                                           numerics::SeededRng& rng);

}  // namespace sts::lqr
