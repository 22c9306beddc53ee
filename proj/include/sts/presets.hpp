#pragma once

#include "sts/dynamics.hpp"
#include "sts/numerics.hpp"
#include "sts/types.hpp"

namespace sts::presets {

// Nominal identified model of the device plus user.
dynamics::ParamVector nominal_params();

// Uncertainty ranges around the nominal model (population spread on the mass
// and inertia entries, millimeter-level tolerance on the geometry).
numerics::IntervalBox param_box();
Vec12 param_lower();
Vec12 param_upper();

// Seated rest configuration, radians.
Vec6 initial_state();

// Input box [tau_h, tau_s, F_x, F_y] and allocation weighting.
Vec4 input_lower();
Vec4 input_upper();
Vec4 input_weight();

// Admissible state region for learning runs, radians.
Vec6 state_lower();
Vec6 state_upper();

// Tracking weights found by the robustness search; used as the shipped gain
// synthesis default and as a regression anchor.
VecX lqr_q_star();
VecX lqr_r_star();
VecX lqr_s_star();

// Mid-range weights used to calibrate the robustness metric.
VecX baseline_q();
VecX baseline_r();
VecX baseline_s();

// Robustness evaluation instants.
std::vector<double> evaluation_instants();

// Learning-law gain matrices (feedback and feedforward on the user outputs)
// found by the derivative-free search; shipped for regression and warm starts.
Mat36 ilc_feedback_star();
Mat36 ilc_feedforward_star();

// Corner models for the warm-started robustness runs: mass, inertia, and CoM
// offsets at the uncertainty extremes, link lengths at nominal -+ 1 mm (wear
// scale, not the full geometric tolerance).
Vec12 ilc_param_lower();
Vec12 ilc_param_upper();

// Learning defaults.
constexpr int kIlcIterations = 30;
constexpr double kRateWeight = 1e-4;
constexpr double kRecallDecay = 0.8;
constexpr double kRecallAmplitude = 0.05;

// Derivative-free search defaults.
constexpr int kDfoDirections = 30;
constexpr int kDfoElite = 10;
constexpr double kDfoSigma = 0.01;
constexpr double kDfoStep = 0.04;

}  // namespace sts::presets
