#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sts/dynamics.hpp"
#include "sts/ilc.hpp"
#include "sts/lqr.hpp"
#include "sts/numerics.hpp"
#include "sts/planner.hpp"
#include "sts/types.hpp"

namespace sts::cli {

inline constexpr const char* kVersion = "1.0.0";

// Process exit codes. The first four mirror the error hierarchy so scripted
// callers can tell recoverable scenario problems apart without parsing text.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kInfeasible = 2,
  kSingular = 3,
  kRiccatiBlowup = 4,
  kAllInfinite = 5,
};

// Optional standing target override; the angle is in degrees like every
// angle in the config file.
struct ZEndOverride {
  bool set = false;
  double theta2_deg = 0.0;
  double x_com = 0.0;
  double y_com = 0.0;
};

// One flat record of everything the subcommands consume, nested by section
// in the file. Angles cross the file boundary in degrees and live here in
// radians.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out_dir = "out";
  std::string preset = "paper";

  // plan
  double t0 = 0.0;
  double tf = 3.5;
  double step = 0.004;
  Vec4 input_lower, input_upper, input_weight;
  ZEndOverride z_end;

  // model
  Vec12 p_nominal, p_lower, p_upper;

  // lqr
  VecX lqr_q, lqr_r, lqr_s;

  // pool
  int pool_count = 100;
  double pool_q_max = 100.0, pool_r_max = 0.01, pool_s_max = 100.0;

  // reach
  int reach_samples = 500;
  int containment_samples = 120;
  std::vector<double> instants;

  // ilc
  int ilc_iterations = 30;
  std::string ilc_recall = "perfect";
  std::uint64_t ilc_recall_seed = 0;
  double ilc_recall_decay = 0.8, ilc_recall_amplitude = 0.05;
  Vec12 ilc_p_true;
  std::string ilc_gains = "star";  // star | zero | path to a gains file
  std::string ilc_warm_start;      // path to a shoulder-load table, empty = built-in line
  int ilc_substeps = 4;
  Vec6 ilc_state_lower, ilc_state_upper;

  // dfo
  double dfo_sigma = 0.01, dfo_step = 0.04;
  int dfo_directions = 30, dfo_elite = 10, dfo_iterations = 100;
  int dfo_training_iterations = 30, dfo_substeps = 4;

  static ExperimentConfig paper_defaults();
  static ExperimentConfig desk_defaults();
  static ExperimentConfig preset_defaults(const std::string& name);

  planner::PlanSpec plan_spec() const;
  lqr::LqrWeights lqr_weights() const;
  numerics::IntervalBox param_box() const;
  ilc::RecallPolicy recall_policy() const;
};

// Full-schema serialization with every key present and angles back in
// degrees; keys are emitted sorted, so equal configs give equal text. The
// manifest hash fingerprints this string.
std::string canonical_json(const ExperimentConfig& config);

// Applies the sections found in text on top of base. Unknown keys, wrong
// types, and wrong arities all throw Error.
ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base);

// Learning gains resolved from the config source: the shipped search result,
// zeros, or a tuned-gains file.
ilc::IlcGains resolve_ilc_gains(const ExperimentConfig& config);

void write_ilc_gains(const std::string& path, const ilc::IlcGains& gains);
ilc::IlcGains read_ilc_gains(const std::string& path);

// Subcommands. Each writes its artifacts plus a manifest into out_dir and
// throws the module error on failure.
void cmd_plan(const ExperimentConfig& config);
void cmd_synthesize(const ExperimentConfig& config);
void cmd_reach(const ExperimentConfig& config);
void cmd_ilc(const ExperimentConfig& config);
void cmd_tune(const ExperimentConfig& config);

// Argument parsing, config merge (preset defaults, then file, then flags),
// dispatch, and error-to-exit-code mapping.
int run(int argc, const char* const* argv);

}  // namespace sts::cli
