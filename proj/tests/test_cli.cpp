#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>

#include "sts/cli.hpp"
#include "sts/io.hpp"
#include "sts/presets.hpp"

using namespace sts;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(STS_CLI_PATH) + " " + args + " >/dev/null 2>/dev/null";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sts_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path path = dir / "config.json";
  io::write_text(path, text);
  return path;
}

json load_json(const fs::path& path) { return json::parse(io::read_text(path)); }

const planner::ReferenceBundle& nominal_ref() {
  static const auto ref = planner::build_reference(
      planner::PlanSpec::make_default(presets::nominal_params()));
  return ref;
}

const lqr::GainSchedule& star_gains() {
  static const auto gains = lqr::solve_riccati(
      lqr::linearize(nominal_ref(), presets::nominal_params()),
      {presets::lqr_q_star(), presets::lqr_r_star(), presets::lqr_s_star()});
  return gains;
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("seventeen digit text reproduces doubles bitwise") {
  numerics::SeededRng rng(6);
  for (int i = 0; i < 300; ++i) {
    const double scale = std::pow(10.0, rng.uniform(-18.0, 18.0));
    const double v = rng.normal() * scale;
    CHECK(std::strtod(io::format_double(v).c_str(), nullptr) == v);
  }
  for (double v : {0.0, -0.0, kPi, 1e-308, -1e300, 2.0 / 3.0})
    CHECK(std::strtod(io::format_double(v).c_str(), nullptr) == v);
}

TEST_CASE("csv tables round trip") {
  const fs::path dir = fresh_dir("csv");
  numerics::SeededRng rng(7);
  io::Table table;
  table.columns = {"t", "a", "b"};
  table.values = MatX::Random(17, 3) * 1e6;
  io::write_csv(dir / "t.csv", table);
  const auto back = io::read_csv(dir / "t.csv");
  CHECK(back.columns == table.columns);
  REQUIRE(back.values.rows() == 17);
  CHECK((back.values - table.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("malformed csv is rejected") {
  const fs::path dir = fresh_dir("csv_bad");
  io::write_text(dir / "ragged.csv", "a,b\n1,2\n3\n");
  CHECK_THROWS_AS(io::read_csv(dir / "ragged.csv"), Error);
  io::write_text(dir / "words.csv", "a,b\n1,frog\n");
  CHECK_THROWS_AS(io::read_csv(dir / "words.csv"), Error);
  CHECK_THROWS_AS(io::read_csv(dir / "absent.csv"), Error);
}

TEST_CASE("trajectory tables round trip") {
  const auto grid = numerics::TimeGrid::uniform(0.0, 1.0, 0.25);
  numerics::Trajectory traj(grid, MatX::Random(3, Eigen::Index(grid.size())));
  const auto table = io::trajectory_table(traj, {"p", "q", "r"});
  CHECK(table.columns.front() == "t");
  const auto back = io::table_trajectory(table);
  CHECK(back.dim() == 3);
  CHECK(back.size() == traj.size());
  CHECK((back.values() - traj.values()).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i)
    CHECK(back.grid().node(i) == grid.node(i));
}

TEST_CASE("gain schedules reload bitwise") {
  const fs::path dir = fresh_dir("gains");
  const auto grid = numerics::TimeGrid::uniform(0.0, 0.5, 0.1);
  const auto n = Eigen::Index(grid.size());
  lqr::GainSchedule sched;
  sched.gain = numerics::MatrixSchedule(4, 6, numerics::Trajectory(grid, MatX::Random(24, n)));
  sched.riccati = numerics::MatrixSchedule(6, 6, numerics::Trajectory(grid, MatX::Random(36, n)));
  io::write_gain_schedule(dir / "g.csv", sched);
  const auto back = io::read_gain_schedule(dir / "g.csv");
  CHECK((back.gain.traj.values() - sched.gain.traj.values()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.riccati.traj.values() - sched.riccati.traj.values()).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(back.gain.rows == 4);
  CHECK(back.riccati.cols == 6);
}

TEST_CASE("fingerprint matches the reference fnv vectors") {
  CHECK(io::fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(io::fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(io::fnv1a("foobar") == 0x85944171f73967e8ull);
  CHECK(io::hex64(0xcbf29ce484222325ull) == "cbf29ce484222325");
  CHECK(io::hex64(0x1ull) == "0000000000000001");
}

TEST_CASE("canonical config text is a fixed point of the parser") {
  const auto paper = cli::ExperimentConfig::paper_defaults();
  const std::string text = cli::canonical_json(paper);
  const auto reparsed = cli::parse_config_text(text, cli::ExperimentConfig::paper_defaults());
  CHECK(cli::canonical_json(reparsed) == text);
  const auto desk = cli::ExperimentConfig::desk_defaults();
  CHECK(cli::canonical_json(desk) != text);
  CHECK(desk.reach_samples == 50);
  CHECK(desk.dfo_iterations == 200);
}

TEST_CASE("config patches only what it names") {
  auto base = cli::ExperimentConfig::paper_defaults();
  const auto patched =
      cli::parse_config_text(R"({"seed": 9, "ilc": {"iterations": 5}})", base);
  CHECK(patched.seed == 9);
  CHECK(patched.ilc_iterations == 5);
  CHECK(patched.tf == base.tf);
  CHECK(patched.ilc_recall == base.ilc_recall);
  CHECK((patched.lqr_q - base.lqr_q).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("schema violations are rejected") {
  const auto base = cli::ExperimentConfig::paper_defaults();
  CHECK_THROWS_AS(cli::parse_config_text(R"({"plam": {}})", base), Error);
  CHECK_THROWS_AS(cli::parse_config_text(R"({"plan": {"t9": 1}})", base), Error);
  CHECK_THROWS_AS(cli::parse_config_text(R"({"plan": {"t0": "zero"}})", base), Error);
  CHECK_THROWS_AS(cli::parse_config_text(R"({"lqr": {"q": [1, 2]}})", base), Error);
  CHECK_THROWS_AS(cli::parse_config_text(R"({"ilc": {"recall": "psychic"}})", base), Error);
  CHECK_THROWS_AS(cli::parse_config_text("{", base), Error);
  CHECK_THROWS_AS(cli::parse_config_text("[1, 2]", base), Error);
}

TEST_CASE("file angles are degrees") {
  const auto base = cli::ExperimentConfig::paper_defaults();
  const auto cfg = cli::parse_config_text(
      R"({"ilc": {"state_lower_deg": [80, -120, 0, -20, -5, -70]},
          "plan": {"z_end": {"theta2_deg": -5, "x_com": 0.3, "y_com": 0.9}}})",
      base);
  CHECK((cfg.ilc_state_lower - presets::state_lower()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(cfg.plan_spec().z_end[0] == doctest::Approx(deg2rad(-5.0)).epsilon(1e-14));
  CHECK(cfg.plan_spec().z_end[2] == 0.9);
}

TEST_CASE("learning gain files round trip") {
  const fs::path dir = fresh_dir("ilc_gains");
  const ilc::IlcGains gains{presets::ilc_feedback_star(), presets::ilc_feedforward_star()};
  const auto path = (dir / "g.json").string();
  cli::write_ilc_gains(path, gains);
  const auto back = cli::read_ilc_gains(path);
  CHECK((back.feedback - gains.feedback).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.feedforward - gains.feedforward).cwiseAbs().maxCoeff() == 0.0);

  auto cfg = cli::ExperimentConfig::paper_defaults();
  cfg.ilc_gains = path;
  const auto resolved = cli::resolve_ilc_gains(cfg);
  CHECK((resolved.feedback - gains.feedback).cwiseAbs().maxCoeff() == 0.0);
  cfg.ilc_gains = "zero";
  CHECK(cli::resolve_ilc_gains(cfg).feedback.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("plan subcommand emits the full grid") {
  const fs::path out = fresh_dir("run_plan");
  REQUIRE(run_cli("plan --out " + out.string()) == 0);
  const auto table = io::read_csv(out / "reference.csv");
  CHECK(table.rows() == 876);
  CHECK(table.cols() == 18);
  const auto summary = load_json(out / "summary.json");
  CHECK(summary.at("fy_nonnegative").get<bool>());
  CHECK(summary.at("inputs_in_box").get<bool>());
  CHECK(summary.at("nodes").get<int>() == 876);

  const fs::path out2 = fresh_dir("run_plan2");
  REQUIRE(run_cli("plan --out " + out2.string()) == 0);
  CHECK(io::read_text(out / "reference.csv") == io::read_text(out2 / "reference.csv"));
  CHECK(io::read_text(out / "summary.json") == io::read_text(out2 / "summary.json"));
}

TEST_CASE("synthesize artifact reloads against the in-process schedule") {
  const fs::path out = fresh_dir("run_syn");
  REQUIRE(run_cli("synthesize --out " + out.string()) == 0);
  const auto back = io::read_gain_schedule(out / "gains.csv");
  const auto& direct = star_gains();
  CHECK(back.gain.traj.size() == direct.gain.traj.size());
  CHECK((back.gain.traj.values() - direct.gain.traj.values()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("manifest fingerprints the stored config") {
  const fs::path out = fresh_dir("run_manifest");
  REQUIRE(run_cli("plan --seed 42 --out " + out.string()) == 0);
  const auto manifest = load_json(out / "manifest.json");
  CHECK(manifest.at("seed").get<std::uint64_t>() == 42);
  CHECK(manifest.at("command").get<std::string>() == "plan");
  CHECK(manifest.at("preset").get<std::string>() == "paper");
  const std::string stored = io::read_text(out / "config.json");
  CHECK(manifest.at("config_hash").get<std::string>() == io::hex64(io::fnv1a(stored)));
  CHECK(manifest.at("versions").at("sts").get<std::string>() == cli::kVersion);
}

TEST_CASE("learning subcommand matches an in-process session") {
  const fs::path out = fresh_dir("run_ilc");
  const auto cfg_path = write_config(
      fresh_dir("run_ilc_cfg"), R"({"ilc": {"iterations": 2, "substeps": 1}})");
  REQUIRE(run_cli("ilc --config " + cfg_path.string() + " --out " + out.string()) == 0);

  ilc::IlcSession session({presets::ilc_feedback_star(), presets::ilc_feedforward_star()},
                          nominal_ref(), star_gains(), presets::nominal_params());
  session.substeps = 1;
  const auto r1 = session.run_iteration();
  const auto r2 = session.run_iteration();

  const auto summary = load_json(out / "summary.json");
  REQUIRE(summary.at("t_s").size() == 2);
  CHECK(summary.at("t_s")[0].get<double>() == r1.t_s);
  CHECK(summary.at("t_s")[1].get<double>() == r2.t_s);
  CHECK(summary.at("aborted")[0].get<bool>() == r1.aborted);

  const auto iter1 = io::read_csv(out / "iteration_01.csv");
  CHECK(iter1.cols() == 17);
  CHECK(iter1.rows() == Eigen::Index(r1.state.size()));
  CHECK(fs::exists(out / "final_mu.csv"));
}

TEST_CASE("scenario failures map to distinct exit codes") {
  const fs::path dir = fresh_dir("run_errors");
  const auto infeasible = write_config(
      fresh_dir("cfg_inf"),
      R"({"plan": {"input_lower": [-200, 0, 0, 0], "input_upper": [200, 0, 0, 0]}})");
  CHECK(run_cli("plan --config " + infeasible.string() + " --out " + dir.string()) == 2);

  const auto singular = write_config(
      fresh_dir("cfg_sing"),
      R"({"plan": {"z_end": {"theta2_deg": -5, "x_com": 0.31, "y_com": 3.0},
                   "input_lower": [-1e9, -1e9, -1e9, -1e9],
                   "input_upper": [1e9, 1e9, 1e9, 1e9]}})");
  CHECK(run_cli("plan --config " + singular.string() + " --out " + dir.string()) == 3);

  const auto blowup = write_config(
      fresh_dir("cfg_blow"),
      R"({"lqr": {"s": [1e13, 1e13, 1e13, 1e13, 1e13, 1e13]}})");
  CHECK(run_cli("synthesize --config " + blowup.string() + " --out " + dir.string()) == 4);

  const auto hopeless = write_config(
      fresh_dir("cfg_hopeless"),
      R"({"ilc": {"gains": "zero"}, "dfo": {"iterations": 1, "substeps": 1}})");
  CHECK(run_cli("tune --config " + hopeless.string() + " --out " + dir.string()) == 5);

  const auto unknown = write_config(fresh_dir("cfg_unknown"), R"({"plam": {}})");
  CHECK(run_cli("plan --config " + unknown.string() + " --out " + dir.string()) == 1);
  CHECK(run_cli("plan --config /does/not/exist.json --out " + dir.string()) == 1);
}

TEST_SUITE_END();
