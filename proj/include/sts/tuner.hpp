#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sts/dynamics.hpp"
#include "sts/ilc.hpp"
#include "sts/lqr.hpp"
#include "sts/planner.hpp"
#include "sts/presets.hpp"
#include "sts/types.hpp"

namespace sts::tuner {

using Objective = std::function<double(const VecX&)>;

struct DfoConfig {
  double sigma = presets::kDfoSigma;    // smoothing radius
  double step = presets::kDfoStep;      // constant step size
  int directions = presets::kDfoDirections;
  int elite = presets::kDfoElite;
  int iterations = 0;
  std::uint64_t seed = 0;
  int workers = 1;  // probe evaluations per step run concurrently when > 1
  Objective objective;
};

// What one batched step actually did, for incumbent tracking and the trace.
struct StepReport {
  std::vector<double> probe_costs;  // 2B values, plus before minus per draw
  VecX elite_costs;                 // the costs the update averaged over
  double deviation = 0.0;           // their empirical standard deviation
  int used = 0;                     // directions surviving the infinity drop
  bool skipped = false;             // degenerate deviation, iterate kept
  VecX best_probe;                  // lowest-cost point seen this step
  double best_probe_cost = 0.0;
};

struct DfoTrace {
  std::vector<double> best_cost;        // incumbent after each iterate
  std::vector<VecX> iterate;            // eta after each iterate
  std::vector<VecX> elite_costs;        // costs used by each update
};

struct TuneResult {
  ilc::IlcGains best;
  double best_cost = 0.0;
  DfoTrace trace;
};

// Single-direction finite-difference estimate of the smoothed gradient.
// Infinite objective values flow straight into the result; callers decide
// whether such probes are usable.
VecX two_point_gradient(const Objective& g, const VecX& eta, const VecX& xi, double sigma);

// Plain randomized-smoothing SGD update with a fresh direction.
VecX sgd_step(const VecX& eta, const DfoConfig& config, numerics::SeededRng& rng);

// Batched sorted-direction update: rank the B draws by the better of their
// two probe costs, keep the elite, scale by the elite costs' spread. Aborted
// probes rank last; an elite pair with an aborted side is dropped from the
// average. Throws AllInfinite when every probe aborted.
VecX ars_step(const VecX& eta, const DfoConfig& config, numerics::SeededRng& rng,
              StepReport* report = nullptr);

// Flattening convention shared with the gain fixtures: K rows first, then L
// rows, row by row.
VecX pack_gains(const ilc::IlcGains& gains);
ilc::IlcGains unpack_gains(const VecX& eta);

// Cost of training a fresh simulated user against the given device
// controller: the final-trial learning cost after `iterations` attempts at
// the true parameter p, perfect recall. Each call builds its own session, so
// concurrent evaluation is safe. Search sweeps may drop to one integrator
// substep; the learned costs move by under 0.1%.
Objective training_objective(const planner::ReferenceBundle& ref,
                             const lqr::GainSchedule& lqr_gains,
                             const dynamics::ParamVector& p_true,
                             int iterations = presets::kIlcIterations, int substeps = 4);

// Searches gain space from the given starting point, tracking the best point
// ever probed (not the final iterate). config.objective may be empty, in
// which case the training objective above is used.
TuneResult tune_ilc_gains(const planner::ReferenceBundle& ref,
                          const lqr::GainSchedule& lqr_gains,
                          const dynamics::ParamVector& p_true, const ilc::IlcGains& init,
                          DfoConfig config);

}  // namespace sts::tuner
