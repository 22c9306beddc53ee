#include "sts/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <json.hpp>

#include "sts/io.hpp"
#include "sts/presets.hpp"
#include "sts/reachability.hpp"
#include "sts/tuner.hpp"

namespace sts::cli {

namespace fs = std::filesystem;
using nlohmann::json;

ExperimentConfig ExperimentConfig::paper_defaults() {
  ExperimentConfig c;
  c.input_lower = presets::input_lower();
  c.input_upper = presets::input_upper();
  c.input_weight = presets::input_weight();
  c.p_nominal = presets::nominal_params().to_vector();
  c.p_lower = presets::param_lower();
  c.p_upper = presets::param_upper();
  c.lqr_q = presets::lqr_q_star();
  c.lqr_r = presets::lqr_r_star();
  c.lqr_s = presets::lqr_s_star();
  c.instants = presets::evaluation_instants();
  c.ilc_p_true = c.p_nominal;
  c.ilc_state_lower = presets::state_lower();
  c.ilc_state_upper = presets::state_upper();
  return c;
}

ExperimentConfig ExperimentConfig::desk_defaults() {
  ExperimentConfig c = paper_defaults();
  c.preset = "desk";
  c.pool_count = 20;
  c.reach_samples = 50;
  c.containment_samples = 50;
  c.dfo_iterations = 200;
  c.dfo_substeps = 1;
  return c;
}

ExperimentConfig ExperimentConfig::preset_defaults(const std::string& name) {
  if (name == "paper") return paper_defaults();
  if (name == "desk") return desk_defaults();
  throw Error("unknown preset '" + name + "'");
}

planner::PlanSpec ExperimentConfig::plan_spec() const {
  auto spec = planner::PlanSpec::make_default(dynamics::ParamVector::from_vector(p_nominal));
  spec.t0 = t0;
  spec.tf = tf;
  spec.step = step;
  spec.input_lower = input_lower;
  spec.input_upper = input_upper;
  spec.input_weight = input_weight;
  if (z_end.set) spec.z_end = Vec3(deg2rad(z_end.theta2_deg), z_end.x_com, z_end.y_com);
  return spec;
}

lqr::LqrWeights ExperimentConfig::lqr_weights() const { return {lqr_q, lqr_r, lqr_s}; }

numerics::IntervalBox ExperimentConfig::param_box() const {
  return numerics::IntervalBox(p_lower, p_upper);
}

ilc::RecallPolicy ExperimentConfig::recall_policy() const {
  ilc::RecallPolicy policy;
  if (ilc_recall == "perfect")
    policy.mode = ilc::RecallMode::Perfect;
  else if (ilc_recall == "perturbed")
    policy.mode = ilc::RecallMode::Perturbed;
  else
    throw Error("config: ilc.recall must be 'perfect' or 'perturbed'");
  policy.decay = ilc_recall_decay;
  policy.amplitude = ilc_recall_amplitude;
  policy.seed = ilc_recall_seed;
  return policy;
}

// ---------------------------------------------------------------- config i/o

namespace {

json vec_json(const Eigen::Ref<const VecX>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json vec_json_deg(const Eigen::Ref<const VecX>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(rad2deg(v[i]));
  return a;
}

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) known |= item.key() == k;
    if (!known) throw Error("config: unknown key '" + item.key() + "' in " + section);
  }
}

const json* find(const json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

void opt_number(const json& j, const char* key, const std::string& sec, double& slot) {
  if (const json* v = find(j, key)) {
    if (!v->is_number()) throw Error("config: " + sec + "." + key + " must be a number");
    slot = v->get<double>();
  }
}

void opt_int(const json& j, const char* key, const std::string& sec, int& slot) {
  if (const json* v = find(j, key)) {
    if (!v->is_number_integer()) throw Error("config: " + sec + "." + key + " must be an integer");
    slot = v->get<int>();
  }
}

void opt_u64(const json& j, const char* key, const std::string& sec, std::uint64_t& slot) {
  if (const json* v = find(j, key)) {
    if (!v->is_number_unsigned())
      throw Error("config: " + sec + "." + key + " must be a nonnegative integer");
    slot = v->get<std::uint64_t>();
  }
}

void opt_string(const json& j, const char* key, const std::string& sec, std::string& slot) {
  if (const json* v = find(j, key)) {
    if (!v->is_string()) throw Error("config: " + sec + "." + key + " must be a string");
    slot = v->get<std::string>();
  }
}

VecX number_array(const json& v, const std::string& where, Eigen::Index expected) {
  if (!v.is_array() || (expected >= 0 && Eigen::Index(v.size()) != expected))
    throw Error("config: " + where + " must be an array of " + std::to_string(expected) +
                " numbers");
  VecX out(Eigen::Index(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw Error("config: " + where + " must hold numbers only");
    out[Eigen::Index(i)] = v[i].get<double>();
  }
  return out;
}

template <typename Fixed>
void opt_vec(const json& j, const char* key, const std::string& sec, Fixed& slot) {
  if (const json* v = find(j, key)) slot = number_array(*v, sec + "." + key, slot.size());
}

template <typename Fixed>
void opt_vec_deg(const json& j, const char* key, const std::string& sec, Fixed& slot) {
  if (const json* v = find(j, key))
    slot = (kPi / 180.0) * number_array(*v, sec + "." + key, slot.size());
}

}  // namespace

// Workers and the output directory are execution details, not experiment
// identity: they are accepted as config keys but stay out of the canonical
// echo so reruns into different directories hash and compare equal.
std::string canonical_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;

  json plan;
  plan["t0"] = c.t0;
  plan["tf"] = c.tf;
  plan["step"] = c.step;
  plan["input_lower"] = vec_json(c.input_lower);
  plan["input_upper"] = vec_json(c.input_upper);
  plan["input_weight"] = vec_json(c.input_weight);
  if (c.z_end.set)
    plan["z_end"] = {{"theta2_deg", c.z_end.theta2_deg},
                     {"x_com", c.z_end.x_com},
                     {"y_com", c.z_end.y_com}};
  else
    plan["z_end"] = nullptr;
  j["plan"] = plan;

  json model;
  model["p_nominal"] = vec_json(c.p_nominal);
  model["p_lower"] = vec_json(c.p_lower);
  model["p_upper"] = vec_json(c.p_upper);
  j["model"] = model;

  json lqr;
  lqr["q"] = vec_json(c.lqr_q);
  lqr["r"] = vec_json(c.lqr_r);
  lqr["s"] = vec_json(c.lqr_s);
  j["lqr"] = lqr;

  json pool;
  pool["count"] = c.pool_count;
  pool["q_max"] = c.pool_q_max;
  pool["r_max"] = c.pool_r_max;
  pool["s_max"] = c.pool_s_max;
  j["pool"] = pool;

  json reach;
  reach["samples"] = c.reach_samples;
  reach["containment_samples"] = c.containment_samples;
  reach["instants"] = c.instants;
  j["reach"] = reach;

  json ilc;
  ilc["iterations"] = c.ilc_iterations;
  ilc["recall"] = c.ilc_recall;
  ilc["recall_seed"] = c.ilc_recall_seed;
  ilc["recall_decay"] = c.ilc_recall_decay;
  ilc["recall_amplitude"] = c.ilc_recall_amplitude;
  ilc["p_true"] = vec_json(c.ilc_p_true);
  ilc["gains"] = c.ilc_gains;
  ilc["warm_start"] = c.ilc_warm_start;
  ilc["substeps"] = c.ilc_substeps;
  ilc["state_lower_deg"] = vec_json_deg(c.ilc_state_lower);
  ilc["state_upper_deg"] = vec_json_deg(c.ilc_state_upper);
  j["ilc"] = ilc;

  json dfo;
  dfo["sigma"] = c.dfo_sigma;
  dfo["step"] = c.dfo_step;
  dfo["directions"] = c.dfo_directions;
  dfo["elite"] = c.dfo_elite;
  dfo["iterations"] = c.dfo_iterations;
  dfo["training_iterations"] = c.dfo_training_iterations;
  dfo["substeps"] = c.dfo_substeps;
  j["dfo"] = dfo;

  return j.dump(2) + "\n";
}

ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw Error("config: top level must be an object");
  check_keys(j, "the top level",
             {"seed", "workers", "out_dir", "plan", "model", "lqr", "pool", "reach", "ilc",
              "dfo"});
  opt_u64(j, "seed", "top level", c.seed);
  opt_int(j, "workers", "top level", c.workers);
  opt_string(j, "out_dir", "top level", c.out_dir);

  if (const json* plan = find(j, "plan")) {
    check_keys(*plan, "plan",
               {"t0", "tf", "step", "input_lower", "input_upper", "input_weight", "z_end"});
    opt_number(*plan, "t0", "plan", c.t0);
    opt_number(*plan, "tf", "plan", c.tf);
    opt_number(*plan, "step", "plan", c.step);
    opt_vec(*plan, "input_lower", "plan", c.input_lower);
    opt_vec(*plan, "input_upper", "plan", c.input_upper);
    opt_vec(*plan, "input_weight", "plan", c.input_weight);
    if (const json* z = find(*plan, "z_end")) {
      if (z->is_null()) {
        c.z_end.set = false;
      } else {
        check_keys(*z, "plan.z_end", {"theta2_deg", "x_com", "y_com"});
        c.z_end.set = true;
        opt_number(*z, "theta2_deg", "plan.z_end", c.z_end.theta2_deg);
        opt_number(*z, "x_com", "plan.z_end", c.z_end.x_com);
        opt_number(*z, "y_com", "plan.z_end", c.z_end.y_com);
      }
    }
  }

  if (const json* model = find(j, "model")) {
    check_keys(*model, "model", {"p_nominal", "p_lower", "p_upper"});
    opt_vec(*model, "p_nominal", "model", c.p_nominal);
    opt_vec(*model, "p_lower", "model", c.p_lower);
    opt_vec(*model, "p_upper", "model", c.p_upper);
  }

  if (const json* lw = find(j, "lqr")) {
    check_keys(*lw, "lqr", {"q", "r", "s"});
    opt_vec(*lw, "q", "lqr", c.lqr_q);
    opt_vec(*lw, "r", "lqr", c.lqr_r);
    opt_vec(*lw, "s", "lqr", c.lqr_s);
  }

  if (const json* pool = find(j, "pool")) {
    check_keys(*pool, "pool", {"count", "q_max", "r_max", "s_max"});
    opt_int(*pool, "count", "pool", c.pool_count);
    opt_number(*pool, "q_max", "pool", c.pool_q_max);
    opt_number(*pool, "r_max", "pool", c.pool_r_max);
    opt_number(*pool, "s_max", "pool", c.pool_s_max);
  }

  if (const json* reach = find(j, "reach")) {
    check_keys(*reach, "reach", {"samples", "containment_samples", "instants"});
    opt_int(*reach, "samples", "reach", c.reach_samples);
    opt_int(*reach, "containment_samples", "reach", c.containment_samples);
    if (const json* inst = find(*reach, "instants")) {
      const VecX v = number_array(*inst, "reach.instants", -1);
      c.instants.assign(v.data(), v.data() + v.size());
    }
  }

  if (const json* ilc = find(j, "ilc")) {
    check_keys(*ilc, "ilc",
               {"iterations", "recall", "recall_seed", "recall_decay", "recall_amplitude",
                "p_true", "gains", "warm_start", "substeps", "state_lower_deg",
                "state_upper_deg"});
    opt_int(*ilc, "iterations", "ilc", c.ilc_iterations);
    opt_string(*ilc, "recall", "ilc", c.ilc_recall);
    opt_u64(*ilc, "recall_seed", "ilc", c.ilc_recall_seed);
    opt_number(*ilc, "recall_decay", "ilc", c.ilc_recall_decay);
    opt_number(*ilc, "recall_amplitude", "ilc", c.ilc_recall_amplitude);
    opt_vec(*ilc, "p_true", "ilc", c.ilc_p_true);
    opt_string(*ilc, "gains", "ilc", c.ilc_gains);
    opt_string(*ilc, "warm_start", "ilc", c.ilc_warm_start);
    opt_int(*ilc, "substeps", "ilc", c.ilc_substeps);
    opt_vec_deg(*ilc, "state_lower_deg", "ilc", c.ilc_state_lower);
    opt_vec_deg(*ilc, "state_upper_deg", "ilc", c.ilc_state_upper);
  }

  if (const json* dfo = find(j, "dfo")) {
    check_keys(*dfo, "dfo",
               {"sigma", "step", "directions", "elite", "iterations", "training_iterations",
                "substeps"});
    opt_number(*dfo, "sigma", "dfo", c.dfo_sigma);
    opt_number(*dfo, "step", "dfo", c.dfo_step);
    opt_int(*dfo, "directions", "dfo", c.dfo_directions);
    opt_int(*dfo, "elite", "dfo", c.dfo_elite);
    opt_int(*dfo, "iterations", "dfo", c.dfo_iterations);
    opt_int(*dfo, "training_iterations", "dfo", c.dfo_training_iterations);
    opt_int(*dfo, "substeps", "dfo", c.dfo_substeps);
  }

  if (c.ilc_recall != "perfect" && c.ilc_recall != "perturbed")
    throw Error("config: ilc.recall must be 'perfect' or 'perturbed'");
  return c;
}

// ------------------------------------------------------------------- gains i/o

namespace {

json mat36_json(const Mat36& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) {
    json row = json::array();
    for (int col = 0; col < 6; ++col) row.push_back(m(r, col));
    rows.push_back(row);
  }
  return rows;
}

Mat36 mat36_from_json(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3)
    throw Error("gains: " + where + " must be 3 rows of 6 numbers");
  Mat36 m;
  for (int r = 0; r < 3; ++r) {
    const VecX row = number_array(v[std::size_t(r)], where, 6);
    m.row(r) = row.transpose();
  }
  return m;
}

void write_json_file(const fs::path& path, const json& j) {
  io::write_text(path, j.dump(2) + "\n");
}

}  // namespace

ilc::IlcGains resolve_ilc_gains(const ExperimentConfig& config) {
  if (config.ilc_gains == "star")
    return {presets::ilc_feedback_star(), presets::ilc_feedforward_star()};
  if (config.ilc_gains == "zero") {
    ilc::IlcGains g;
    g.feedback.setZero();
    g.feedforward.setZero();
    return g;
  }
  return read_ilc_gains(config.ilc_gains);
}

void write_ilc_gains(const std::string& path, const ilc::IlcGains& gains) {
  json j;
  j["feedback"] = mat36_json(gains.feedback);
  j["feedforward"] = mat36_json(gains.feedforward);
  write_json_file(path, j);
}

ilc::IlcGains read_ilc_gains(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw Error("gains: " + path + ": " + e.what());
  }
  if (!j.is_object()) throw Error("gains: " + path + " must be an object");
  check_keys(j, path, {"feedback", "feedforward"});
  const json* fb = find(j, "feedback");
  const json* ff = find(j, "feedforward");
  if (!fb || !ff) throw Error("gains: " + path + " needs feedback and feedforward");
  return {mat36_from_json(*fb, "feedback"), mat36_from_json(*ff, "feedforward")};
}

// ----------------------------------------------------------------- subcommands

namespace {

void write_manifest(const ExperimentConfig& config, const std::string& command) {
  json versions;
  versions["sts"] = kVersion;
  versions["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
                      std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION);
  versions["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  versions["cli11"] = CLI11_VERSION;

  json j;
  j["command"] = command;
  j["config_hash"] = io::hex64(io::fnv1a(canonical_json(config)));
  j["preset"] = config.preset;
  j["seed"] = config.seed;
  j["versions"] = versions;
  write_json_file(fs::path(config.out_dir) / "manifest.json", j);
  io::write_text(fs::path(config.out_dir) / "config.json", canonical_json(config));
}

std::vector<std::string> state_names() { return {"th1", "th2", "th3", "om1", "om2", "om3"}; }
std::vector<std::string> input_names() { return {"tau_h", "tau_s", "f_x", "f_y"}; }

std::vector<std::string> concat(std::initializer_list<std::vector<std::string>> parts) {
  std::vector<std::string> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace

void cmd_plan(const ExperimentConfig& config) {
  const auto spec = config.plan_spec();
  const auto ref = planner::build_reference(spec);
  const Eigen::Index n = Eigen::Index(ref.state.size());

  MatX stacked(6 + 4 + 4 + 3, n);
  stacked.topRows(6) = ref.state.values();
  stacked.middleRows(6, 4) = ref.input.values();
  stacked.middleRows(10, 4) = ref.output.values();
  stacked.bottomRows(3) = ref.joint_acc.values();
  const auto names = concat({state_names(),
                             input_names(),
                             {"xcom", "ycom", "vxcom", "vycom"},
                             {"thdd1", "thdd2", "thdd3"}});
  io::write_csv(fs::path(config.out_dir) / "reference.csv",
                io::trajectory_table(numerics::Trajectory(ref.state.grid(), stacked), names));

  const double fy_min = ref.input.values().row(3).minCoeff();
  const numerics::IntervalBox u_box(config.input_lower, config.input_upper);
  bool in_box = true;
  for (Eigen::Index k = 0; k < n; ++k)
    in_box &= u_box.contains(ref.input.node(std::size_t(k)), 1e-9);

  json summary;
  summary["nodes"] = n;
  summary["t0"] = spec.t0;
  summary["tf"] = spec.tf;
  summary["step"] = spec.step;
  summary["fy_min"] = fy_min;
  summary["fy_nonnegative"] = fy_min >= 0.0;
  summary["inputs_in_box"] = in_box;
  summary["theta_start_deg"] = vec_json_deg(Vec3(ref.state.node(0).head(3)));
  summary["theta_end_deg"] = vec_json_deg(Vec3(ref.state.node(std::size_t(n - 1)).head(3)));
  write_json_file(fs::path(config.out_dir) / "summary.json", summary);
  write_manifest(config, "plan");
  std::cout << "plan: " << n << " nodes, fy_min " << fy_min << "\n";
}

void cmd_synthesize(const ExperimentConfig& config) {
  const auto ref = planner::build_reference(config.plan_spec());
  const auto lin = lqr::linearize(ref, ref.params);
  const auto gains = lqr::solve_riccati(lin, config.lqr_weights());
  io::write_gain_schedule(fs::path(config.out_dir) / "gains.csv", gains);

  double max_gain = 0.0;
  for (std::size_t k = 0; k < gains.gain.traj.size(); ++k)
    max_gain = std::max(max_gain, gains.gain.at_node(k).cwiseAbs().maxCoeff());

  json summary;
  summary["nodes"] = gains.gain.traj.size();
  summary["max_abs_gain"] = max_gain;
  summary["q"] = vec_json(config.lqr_q);
  summary["r"] = vec_json(config.lqr_r);
  summary["s"] = vec_json(config.lqr_s);
  write_json_file(fs::path(config.out_dir) / "summary.json", summary);
  write_manifest(config, "synthesize");
  std::cout << "synthesize: " << gains.gain.traj.size() << " nodes, max |K| " << max_gain
            << "\n";
}

namespace {

std::vector<reach::ReachEnvelope> envelopes_at_instants(const reach::ReachSystem& sys,
                                                        const reach::SensitivityBounds& bounds,
                                                        const numerics::IntervalBox& p_box,
                                                        const std::vector<double>& instants) {
  reach::CornerCache cache;
  std::vector<reach::ReachEnvelope> out;
  out.reserve(instants.size());
  for (double t : instants) out.push_back(reach::lemma1_envelope(sys, bounds, p_box, t, &cache));
  return out;
}

json containment_json(const reach::ContainmentReport& report) {
  json j;
  j["checked"] = report.checked;
  j["violations"] = report.violations;
  j["fraction"] = report.fraction();
  return j;
}

}  // namespace

void cmd_reach(const ExperimentConfig& config) {
  const auto ref = planner::build_reference(config.plan_spec());
  const auto lin = lqr::linearize(ref, ref.params);
  const Vec6 x0 = presets::initial_state();
  const auto p_box = config.param_box();
  const std::vector<VecX> probes = {VecX(ref.params.to_vector()), p_box.lower(),
                                    p_box.upper()};
  numerics::SeededRng root(config.seed);

  // Baseline pass pins the metric scale: mid-range weights, same sampling
  // budget, weights calibrated so the baseline scores six.
  const auto base_gains = lqr::solve_riccati(
      lin, {presets::baseline_q(), presets::baseline_r(), presets::baseline_s()});
  const auto base_sys = reach::make_closed_loop_system(base_gains, ref, x0);
  auto rng_base = root.child(0);
  const auto base_bounds = reach::estimate_bounds(base_sys, p_box, config.reach_samples,
                                                  rng_base, probes, config.workers);
  const auto base_env = envelopes_at_instants(base_sys, base_bounds, p_box, config.instants);
  const auto weights = reach::calibrate_weights(base_env, ref);
  const double jp_baseline = reach::performance_metric(base_env, ref, weights);

  // Scored pass with the configured weights.
  const auto gains = lqr::solve_riccati(lin, config.lqr_weights());
  const auto sys = reach::make_closed_loop_system(gains, ref, x0);
  reach::ProbeLog log;
  log.instants = config.instants;
  auto rng_main = root.child(1);
  const auto bounds = reach::estimate_bounds(sys, p_box, config.reach_samples, rng_main, probes,
                                             config.workers, &log);
  const auto envelopes = envelopes_at_instants(sys, bounds, p_box, config.instants);
  const double jp = reach::performance_metric(envelopes, ref, weights);
  const auto breakdown = reach::metric_breakdown(envelopes, ref);

  const auto bounding = reach::check_containment(sys, envelopes, log.params, config.workers);
  auto rng_fresh = root.child(2);
  const auto fresh_params =
      numerics::latin_hypercube(config.containment_samples, p_box, rng_fresh);
  const auto fresh = reach::check_containment(sys, envelopes, fresh_params, config.workers);

  io::Table table;
  table.columns = concat({{"t"}});
  for (const char* quantity : {"x", "y", "u"})
    for (const char* side : {"lo", "hi"}) {
      const auto base = std::string(quantity) + "_" + side;
      const Eigen::Index dim = quantity[0] == 'x' ? 6 : 4;
      for (Eigen::Index i = 0; i < dim; ++i)
        table.columns.push_back(base + std::to_string(i + 1));
    }
  table.values.resize(Eigen::Index(envelopes.size()), Eigen::Index(table.columns.size()));
  for (std::size_t e = 0; e < envelopes.size(); ++e) {
    const auto& env = envelopes[e];
    VecX row(table.values.cols());
    row << env.t, env.x.lower(), env.x.upper(), env.y.lower(), env.y.upper(), env.u.lower(),
        env.u.upper();
    table.values.row(Eigen::Index(e)) = row.transpose();
  }
  io::write_csv(fs::path(config.out_dir) / "envelopes.csv", table);

  json report;
  report["jp_baseline"] = jp_baseline;
  report["jp"] = jp;
  report["volume_sums"] = vec_json(breakdown.vol_sums);
  report["offset_sums"] = vec_json(breakdown.off_sums);
  report["weights_volume"] = vec_json(weights.w_v);
  report["weights_offset"] = vec_json(weights.w_o);
  report["containment_bounding"] = containment_json(bounding);
  report["containment_fresh"] = containment_json(fresh);
  write_json_file(fs::path(config.out_dir) / "report.json", report);
  write_manifest(config, "reach");
  std::cout << "reach: jp " << jp << " (baseline " << jp_baseline << "), fresh violation "
            << fresh.fraction() << "\n";
}

void cmd_ilc(const ExperimentConfig& config) {
  const auto ref = planner::build_reference(config.plan_spec());
  const auto lin = lqr::linearize(ref, ref.params);
  const auto lqr_gains = lqr::solve_riccati(lin, config.lqr_weights());
  const auto gains = resolve_ilc_gains(config);

  ilc::IlcSession session(gains, ref, lqr_gains,
                          dynamics::ParamVector::from_vector(config.ilc_p_true),
                          config.recall_policy());
  session.substeps = config.ilc_substeps;
  session.state_box = numerics::IntervalBox(config.ilc_state_lower, config.ilc_state_upper);
  session.input_box = numerics::IntervalBox(config.input_lower, config.input_upper);
  if (!config.ilc_warm_start.empty())
    session.override_initial_input(io::table_trajectory(io::read_csv(config.ilc_warm_start)));

  const auto iter_names = concat({state_names(),
                                  {"ups_th3", "ups_xcom", "ups_ycom", "ups_om3", "ups_vxcom",
                                   "ups_vycom"},
                                  {"tau_s", "f_x", "f_y"},
                                  {"tau_h"}});
  json t_s = json::array(), cost = json::array(), aborted = json::array();
  int completed = 0;
  ilc::IterationResult last;
  for (int jiter = 1; jiter <= config.ilc_iterations; ++jiter) {
    auto res = session.run_iteration();
    t_s.push_back(res.t_s);
    cost.push_back(res.cost);
    aborted.push_back(res.aborted);
    completed += res.aborted ? 0 : 1;

    const Eigen::Index n = Eigen::Index(res.state.size());
    MatX stacked(16, n);
    if (n > 0) {
      stacked.topRows(6) = res.state.values();
      stacked.middleRows(6, 6) = res.output.values();
      stacked.middleRows(12, 3) = res.mu.values();
      stacked.bottomRows(1) = res.hip.values();
    }
    char name[32];
    std::snprintf(name, sizeof(name), "iteration_%02d.csv", jiter);
    io::Table table;
    table.columns = concat({{"t"}, iter_names});
    table.values.resize(n, 17);
    for (Eigen::Index k = 0; k < n; ++k) {
      table.values(k, 0) = res.state.grid().node(std::size_t(k));
      table.values.row(k).tail(16) = stacked.col(k).transpose();
    }
    io::write_csv(fs::path(config.out_dir) / name, table);
    last = std::move(res);
  }

  if (last.mu.size() > 0)
    io::write_csv(fs::path(config.out_dir) / "final_mu.csv",
                  io::trajectory_table(last.mu, {"tau_s", "f_x", "f_y"}));

  json summary;
  summary["iterations"] = config.ilc_iterations;
  summary["t_s"] = t_s;
  summary["cost"] = cost;
  summary["aborted"] = aborted;
  summary["completed"] = completed;
  summary["final_cost"] = last.cost;
  summary["gains"] = config.ilc_gains;
  summary["recall"] = config.ilc_recall;
  summary["recall_seed"] = config.ilc_recall_seed;
  summary["warm_start"] = config.ilc_warm_start;
  write_json_file(fs::path(config.out_dir) / "summary.json", summary);
  write_manifest(config, "ilc");
  std::cout << "ilc: " << completed << "/" << config.ilc_iterations
            << " trials completed, final cost " << last.cost << "\n";
}

void cmd_tune(const ExperimentConfig& config) {
  const auto ref = planner::build_reference(config.plan_spec());
  const auto lin = lqr::linearize(ref, ref.params);
  const auto lqr_gains = lqr::solve_riccati(lin, config.lqr_weights());
  const auto init = resolve_ilc_gains(config);

  tuner::DfoConfig dfo;
  dfo.sigma = config.dfo_sigma;
  dfo.step = config.dfo_step;
  dfo.directions = config.dfo_directions;
  dfo.elite = config.dfo_elite;
  dfo.iterations = config.dfo_iterations;
  dfo.seed = config.seed;
  dfo.workers = config.workers;
  dfo.objective =
      tuner::training_objective(ref, lqr_gains, dynamics::ParamVector::from_vector(config.ilc_p_true),
                                config.dfo_training_iterations, config.dfo_substeps);

  const double initial_cost = dfo.objective(tuner::pack_gains(init));
  const auto result = tuner::tune_ilc_gains(ref, lqr_gains,
                                            dynamics::ParamVector::from_vector(config.ilc_p_true),
                                            init, dfo);

  write_ilc_gains((fs::path(config.out_dir) / "tuned_gains.json").string(), result.best);

  io::Table trace;
  trace.columns = {"iteration", "best_cost", "elite_count", "elite_min", "elite_mean"};
  trace.values.resize(Eigen::Index(result.trace.best_cost.size()), 5);
  for (std::size_t k = 0; k < result.trace.best_cost.size(); ++k) {
    const VecX& elite = result.trace.elite_costs[k];
    const Eigen::Index r = Eigen::Index(k);
    trace.values(r, 0) = double(k + 1);
    trace.values(r, 1) = result.trace.best_cost[k];
    trace.values(r, 2) = double(elite.size());
    trace.values(r, 3) = elite.size() ? elite.minCoeff() : std::nan("");
    trace.values(r, 4) = elite.size() ? elite.mean() : std::nan("");
  }
  io::write_csv(fs::path(config.out_dir) / "trace.csv", trace);

  json summary;
  summary["initial_cost"] = initial_cost;
  summary["best_cost"] = result.best_cost;
  summary["improved"] = result.best_cost < initial_cost;
  summary["iterations"] = config.dfo_iterations;
  summary["training_iterations"] = config.dfo_training_iterations;
  write_json_file(fs::path(config.out_dir) / "summary.json", summary);
  write_manifest(config, "tune");
  std::cout << "tune: " << initial_cost << " -> " << result.best_cost << " over "
            << config.dfo_iterations << " iterations\n";
}

// ------------------------------------------------------------------ dispatch

int run(int argc, const char* const* argv) {
  CLI::App app{"sit-to-stand assistance toolkit"};
  app.require_subcommand(1);

  std::string config_path, preset = "paper", out_dir;
  std::uint64_t seed = 0;
  int workers = 1;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file (json)");
    sub->add_option("--seed", seed, "override the experiment seed");
    sub->add_option("--workers", workers, "worker thread count");
    sub->add_option("--preset", preset, "default set: paper or desk")
        ->check(CLI::IsMember({"paper", "desk"}));
    sub->add_option("--out", out_dir, "output directory");
  };

  add_common(app.add_subcommand("plan", "reference trajectory and allocated inputs"));
  add_common(app.add_subcommand("synthesize", "finite-horizon tracking gains"));
  add_common(app.add_subcommand("reach", "uncertainty envelopes and the robustness metric"));
  add_common(app.add_subcommand("ilc", "simulated learning trials"));
  add_common(app.add_subcommand("tune", "derivative-free learning-gain search"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    ExperimentConfig config = ExperimentConfig::preset_defaults(preset);
    config.preset = preset;
    if (!config_path.empty()) config = parse_config_text(io::read_text(config_path), config);
    if (sub->count("--seed")) config.seed = seed;
    if (sub->count("--workers")) config.workers = workers;
    if (sub->count("--out")) config.out_dir = out_dir;

    const std::string name = sub->get_name();
    if (name == "plan")
      cmd_plan(config);
    else if (name == "synthesize")
      cmd_synthesize(config);
    else if (name == "reach")
      cmd_reach(config);
    else if (name == "ilc")
      cmd_ilc(config);
    else
      cmd_tune(config);
    return kOk;
  } catch (const Infeasible& e) {
    std::cerr << "error (infeasible): " << e.what() << "\n";
    return kInfeasible;
  } catch (const SingularConfiguration& e) {
    std::cerr << "error (singular configuration): " << e.what() << "\n";
    return kSingular;
  } catch (const RiccatiBlowup& e) {
    std::cerr << "error (riccati blowup): " << e.what() << "\n";
    return kRiccatiBlowup;
  } catch (const AllInfinite& e) {
    std::cerr << "error (all probes infinite): " << e.what() << "\n";
    return kAllInfinite;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace sts::cli
