#pragma once

#include <functional>
#include <map>
#include <vector>

#include "sts/lqr.hpp"
#include "sts/numerics.hpp"
#include "sts/planner.hpp"
#include "sts/types.hpp"

namespace sts::reach {

// A parameter-uncertain system prepared for sensitivity analysis: the field
// and its Jacobians along a trajectory, plus the static output and input
// maps. Small hand-built instances double as analytic test cases; the
// closed-loop robot comes from make_closed_loop_system.
struct ReachSystem {
  VecX x0;
  numerics::TimeGrid grid;
  Eigen::Index nx = 0, ny = 0, nu = 0, np = 0;

  // dx = f(t, x, rho)
  std::function<void(double, const VecX&, const VecX&, VecX&)> field;
  // a = d f / d x (nx by nx), b = d f / d rho (nx by np) along a trajectory
  std::function<void(double, const VecX&, const VecX&, MatX&, MatX&)> field_jacobians;
  // y = h(x, rho) and its Jacobians (ny by nx, ny by np)
  std::function<VecX(double, const VecX&, const VecX&)> output;
  std::function<void(double, const VecX&, const VecX&, MatX&, MatX&)> output_jacobians;
  // u = l(t, x), affine in x with state Jacobian -K(t)
  std::function<VecX(double, const VecX&)> input;
  std::function<MatX(double)> input_state_jacobian;

  numerics::IntegrateOptions ode;  // adaptive tolerances for every sweep
};

// LQR-in-the-loop robot under parameter uncertainty. The storage grid is
// chosen so the default evaluation instants fall on nodes.
ReachSystem make_closed_loop_system(const lqr::GainSchedule& gains,
                                    const planner::ReferenceBundle& ref, const Vec6& x0,
                                    double storage_step = 0.0035);

struct SensitivitySolution {
  numerics::Trajectory state;      // nx
  numerics::MatrixSchedule sx;     // nx by np
  numerics::MatrixSchedule sy;     // ny by np
  numerics::MatrixSchedule su;     // nu by np
  VecX rho;
};

// Jointly integrates the state with its parameter sensitivity from Sx(t0) = 0
// and derives the output and input sensitivities at the nodes.
SensitivitySolution integrate_sensitivity(const ReachSystem& sys, const VecX& rho);

// Entrywise interval hulls of the sampled sensitivities.
struct SensitivityBounds {
  numerics::MatrixSchedule sx_lo, sx_hi;
  numerics::MatrixSchedule sy_lo, sy_hi;
  numerics::MatrixSchedule su_lo, su_hi;
};

// Optional record of the bounding samples for containment checks: set
// instants before the call, the estimator fills params and per-instant
// state/output/input columns (one column per sample).
struct ProbeLog {
  std::vector<double> instants;
  std::vector<VecX> params;
  std::vector<MatX> x, y, u;
};

// Latin hypercube draws plus the supplied extra probes, reduced entrywise at
// every node. Deterministic for a given rng seed regardless of workers.
SensitivityBounds estimate_bounds(const ReachSystem& sys, const numerics::IntervalBox& rho_box,
                                  int n_samples, numerics::SeededRng& rng,
                                  const std::vector<VecX>& extra_probes = {}, int workers = 1,
                                  ProbeLog* log = nullptr);

// Robot wrapper: appends the plan parameter and both box corners as probes.
SensitivityBounds estimate_bounds(const lqr::GainSchedule& gains,
                                  const planner::ReferenceBundle& ref, const Vec6& x0,
                                  const numerics::IntervalBox& p_box, int n_samples,
                                  numerics::SeededRng& rng, int workers = 1,
                                  ProbeLog* log = nullptr);

// Interval over-approximations of the reachable state, output, and input
// sets at one instant.
struct ReachEnvelope {
  double t = 0.0;
  numerics::IntervalBox x, y, u;
};

// Corner-parameter trajectories deduplicated across rows and instants.
class CornerCache {
 public:
  struct Solution {
    numerics::Trajectory state, output, input;
  };
  const Solution& at(const ReachSystem& sys, const VecX& rho);

 private:
  std::map<std::vector<double>, Solution> cache_;
};

// Per-row corner construction from the sign of the interval center, with the
// correction term for bound excursions past zero.
ReachEnvelope lemma1_envelope(const ReachSystem& sys, const SensitivityBounds& bounds,
                              const numerics::IntervalBox& rho_box, double t,
                              CornerCache* cache = nullptr);

struct MetricWeights {
  Vec3 w_v = Vec3::Ones();
  Vec3 w_o = Vec3::Ones();
  std::vector<double> instants;
};

// The six sums the metric weighs: per-quantity envelope volumes and
// center-offset products accumulated over the instants.
struct MetricBreakdown {
  Vec3 vol_sums = Vec3::Zero();
  Vec3 off_sums = Vec3::Zero();
};

MetricBreakdown metric_breakdown(const std::vector<ReachEnvelope>& envelopes,
                                 const planner::ReferenceBundle& ref);

double performance_metric(const std::vector<ReachEnvelope>& envelopes,
                          const planner::ReferenceBundle& ref, const MetricWeights& w);

// Reciprocals of the baseline breakdown, normalizing its metric to six.
// Throws ZeroBaselineTerm when any baseline sum vanishes.
MetricWeights calibrate_weights(const std::vector<ReachEnvelope>& baseline_envelopes,
                                const planner::ReferenceBundle& ref);

// Fraction of parameter samples whose closed-loop trajectories leave the
// envelopes at any instant. slack absorbs roundoff at touching corners.
struct ContainmentReport {
  int checked = 0;
  int violations = 0;
  double fraction() const { return checked > 0 ? double(violations) / checked : 0.0; }
};

ContainmentReport check_containment(const ReachSystem& sys,
                                    const std::vector<ReachEnvelope>& envelopes,
                                    const std::vector<VecX>& params, int workers = 1,
                                    double slack = 1e-9);

struct PoolContext {
  const planner::ReferenceBundle& ref;
  const lqr::LinearizationSchedule& lin;
  Vec6 x0;
  numerics::IntervalBox p_box;
  int n_samples = 500;
  MetricWeights weights;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct PoolEntry {
  int index = -1;
  lqr::LqrWeights weights;
  double jp = 0.0;
  MetricBreakdown breakdown;
  bool failed = false;
};

struct PoolResult {
  int best_index = -1;
  double best_jp = 0.0;
  std::vector<PoolEntry> ranked;  // ascending metric, failures last
};

// Synthesizes and scores every candidate against the same sample draws;
// candidates whose synthesis or integration throws are recorded as failed.
PoolResult pool_search(const std::vector<lqr::LqrWeights>& pool, const PoolContext& ctx);

}  // namespace sts::reach
