#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sts/dynamics.hpp"
#include "sts/lqr.hpp"
#include "sts/numerics.hpp"
#include "sts/planner.hpp"
#include "sts/presets.hpp"
#include "sts/types.hpp"

namespace sts::ilc {

// The learning loop extrapolates the previous trial's input past its abort
// instant; a previous trial that ended exactly at the horizon leaves a
// single-point window, handled by returning the reference end load. This
// error only fires if the stored abort instant is past the horizon, which no
// public path produces.
struct DegenerateExtrapolation : Error {
  explicit DegenerateExtrapolation(const std::string& msg) : Error(msg) {}
};

// Learning gains on the user output error: feedback acts on the running
// trial, feedforward on the remembered one.
struct IlcGains {
  Mat36 feedback;
  Mat36 feedforward;
};

enum class RecallMode { Perfect, Perturbed };

// Imperfect memory of the previous trial's shoulder loads. Perturbed mode
// scales a fresh uniform perturbation by decay^(j-1) so early trials are the
// sloppiest; perfect mode recalls exactly.
struct RecallPolicy {
  RecallMode mode = RecallMode::Perfect;
  double decay = presets::kRecallDecay;
  double amplitude = presets::kRecallAmplitude;
  std::uint64_t seed = 0;
};

struct IterationResult {
  double t_s = 0.0;  // last instant the trial stayed inside the safe box
  double cost = 0.0;  // infinite exactly when aborted
  bool aborted = false;
  numerics::Trajectory state;   // 6, truncated at t_s on abort
  numerics::Trajectory output;  // 6, user-visible quantities
  numerics::Trajectory mu;      // 3, applied shoulder loads
  numerics::Trajectory hip;     // 1, saturated hip torque
};

// Saturated LQR torque at the hips, the one channel the device itself drives.
double hip_torque(double t, const Vec6& x, const planner::ReferenceBundle& ref,
                  const lqr::GainSchedule& lqr_gains, const numerics::IntervalBox& u_box);

// Straight line between the endpoint reference shoulder loads, the only two
// values assumed known before training starts.
numerics::Trajectory init_mu(const planner::ReferenceBundle& ref);

// One simulated user training on repeated ascension attempts. The device
// tracks with the supplied LQR schedule while the learned shoulder loads
// evolve trial over trial. Single-owner mutable state; run distinct sessions
// for distinct scenarios.
class IlcSession {
 public:
  IlcSession(const IlcGains& gains, const planner::ReferenceBundle& ref,
             const lqr::GainSchedule& lqr_gains, const dynamics::ParamVector& p_true,
             RecallPolicy recall = {});

  // Replace the built-in straight-line first input, e.g. with the outcome of
  // an earlier session. A truncated trajectory also moves the first trial's
  // extrapolation instant to its end time.
  void override_initial_input(const numerics::Trajectory& mu0);

  // Learned shoulder loads at time t given the measured output of the
  // running trial. Saturated to the physically exertable range.
  Vec3 mu_update(double t, const Vec6& ups_current) const;

  // Simulates the next trial from the seated state, aborting at the first
  // grid node outside the safe box.
  IterationResult run_iteration();

  int iteration() const { return iteration_; }
  double previous_stop() const { return t_s_prev_; }
  const numerics::TimeGrid& grid() const { return grid_; }

  // Feasible motion range and actuation limits; edits apply to later trials.
  numerics::IntervalBox state_box;
  numerics::IntervalBox input_box;

  // Integrator substeps per stored interval. Safety checks and exported
  // samples stay on the stored grid either way.
  int substeps = 4;

 private:
  Vec6 closed_loop_field(double t, const Vec6& x) const;
  double hip_now(double t, const Vec6& x) const;
  Vec3 saturated_mu(const Vec3& raw) const;

  IlcGains gains_;
  const planner::ReferenceBundle& ref_;
  dynamics::ParamVector p_true_;
  RecallPolicy recall_;
  numerics::SeededRng rng_;

  numerics::TimeGrid grid_;
  Vec6 x0_;
  numerics::Trajectory gain_row_;   // 6, LQR gain row acting on the hip input
  numerics::Trajectory hat_hip_;    // 1, reference hip torque
  numerics::Trajectory hat_ups_;    // 6, reference user output
  Vec3 mu_hat_t0_, mu_hat_tf_;

  numerics::Trajectory mu_prev_;
  numerics::Trajectory ups_prev_;
  Vec3 mu_prev_end_;
  double t_s_prev_ = 0.0;
  Mat3 gamma_ = Mat3::Identity();
  int iteration_ = 0;

  mutable VecX buf3_, buf6a_, buf6b_, bufg_, bufh_;
};

struct TrainingConfig {
  IlcGains gains;
  dynamics::ParamVector p_true;
  RecallPolicy recall;
  int iterations = presets::kIlcIterations;
  int substeps = 4;
  std::optional<numerics::Trajectory> warm_start;
};

// Chains trials through one session, threading the learned input, remembered
// output, and abort instant from each trial into the next.
std::vector<IterationResult> run_training(const planner::ReferenceBundle& ref,
                                          const lqr::GainSchedule& lqr_gains,
                                          const TrainingConfig& cfg);

}  // namespace sts::ilc
