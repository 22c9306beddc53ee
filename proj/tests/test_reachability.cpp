#include <doctest.h>

#include <cmath>

#include "sts/presets.hpp"
#include "sts/reachability.hpp"

using namespace sts;
using namespace sts::reach;
using namespace sts::numerics;

namespace {

const planner::ReferenceBundle& nominal_ref() {
  static const auto ref = planner::build_reference(
      planner::PlanSpec::make_default(presets::nominal_params()));
  return ref;
}

const lqr::LinearizationSchedule& nominal_lin() {
  static const auto lin = lqr::linearize(nominal_ref(), presets::nominal_params());
  return lin;
}

const lqr::GainSchedule& baseline_gains() {
  static const auto gains = lqr::solve_riccati(
      nominal_lin(), {presets::baseline_q(), presets::baseline_r(), presets::baseline_s()});
  return gains;
}

const lqr::GainSchedule& star_gains() {
  static const auto gains = lqr::solve_riccati(
      nominal_lin(), {presets::lqr_q_star(), presets::lqr_r_star(), presets::lqr_s_star()});
  return gains;
}

// Scalar drift system dx = rho: the sensitivity is exactly t and the
// reachable set at time t is exactly [t, 2t] for rho in [1, 2].
ReachSystem drift_system() {
  ReachSystem sys;
  sys.x0 = VecX::Zero(1);
  sys.grid = TimeGrid::uniform(0.0, 1.0, 0.0625);
  sys.nx = sys.ny = sys.nu = sys.np = 1;
  sys.field = [](double, const VecX&, const VecX& rho, VecX& out) { out = rho; };
  sys.field_jacobians = [](double, const VecX&, const VecX&, MatX& a, MatX& b) {
    a = MatX::Zero(1, 1);
    b = MatX::Ones(1, 1);
  };
  sys.output = [](double, const VecX& x, const VecX&) { return x; };
  sys.output_jacobians = [](double, const VecX&, const VecX&, MatX& hx, MatX& hp) {
    hx = MatX::Ones(1, 1);
    hp = MatX::Zero(1, 1);
  };
  sys.input = [](double, const VecX&) { return VecX::Zero(1); };
  sys.input_state_jacobian = [](double) { return MatX::Zero(1, 1); };
  return sys;
}

IntervalBox unit_rho_box() { return IntervalBox(VecX::Ones(1), VecX::Constant(1, 2.0)); }

Trajectory plain_trajectory(const ReachSystem& sys, const VecX& rho) {
  const OdeField field = [&](double t, const VecX& x, VecX& out) { sys.field(t, x, rho, out); };
  return integrate(field, sys.x0, sys.grid, IntegrateMethod::Rk45, sys.ode);
}

}  // namespace

TEST_SUITE_BEGIN("reachability");

TEST_CASE("drift system sensitivity is exactly t") {
  const auto sys = drift_system();
  const auto sol = integrate_sensitivity(sys, VecX::Constant(1, 1.5));
  for (std::size_t i = 0; i < sys.grid.size(); ++i) {
    CHECK(sol.sx.at_node(i)(0, 0) == doctest::Approx(sys.grid.node(i)).epsilon(1e-12));
    CHECK(sol.sy.at_node(i)(0, 0) == doctest::Approx(sys.grid.node(i)).epsilon(1e-12));
    CHECK(sol.su.at_node(i)(0, 0) == 0.0);
  }
  CHECK(sol.state.node(sys.grid.size() - 1)[0] == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("drift system bounds collapse and envelope is the analytic reach set") {
  const auto sys = drift_system();
  SeededRng rng(3);
  const auto bounds = estimate_bounds(sys, unit_rho_box(), 10, rng);
  // The sensitivity is independent of rho, so the interval hull collapses.
  for (std::size_t i = 0; i < sys.grid.size(); ++i) {
    CHECK(bounds.sx_lo.at_node(i)(0, 0) == doctest::Approx(sys.grid.node(i)).epsilon(1e-12));
    CHECK(bounds.sx_hi.at_node(i)(0, 0) == doctest::Approx(sys.grid.node(i)).epsilon(1e-12));
  }
  CornerCache cache;
  for (const double t : {0.5, 1.0}) {
    const auto env = lemma1_envelope(sys, bounds, unit_rho_box(), t, &cache);
    CHECK(env.x.lower()[0] == doctest::Approx(t).epsilon(1e-12));
    CHECK(env.x.upper()[0] == doctest::Approx(2.0 * t).epsilon(1e-12));
    CHECK(env.y.lower()[0] == doctest::Approx(t).epsilon(1e-12));
    CHECK(env.y.upper()[0] == doctest::Approx(2.0 * t).epsilon(1e-12));
  }
}

TEST_CASE("drift system envelopes grow with the parameter box") {
  const auto sys = drift_system();
  const IntervalBox small(VecX::Constant(1, 1.2), VecX::Constant(1, 1.8));
  SeededRng rng_s(3), rng_f(3);
  const auto bounds_small = estimate_bounds(sys, small, 10, rng_s);
  const auto bounds_full = estimate_bounds(sys, unit_rho_box(), 10, rng_f);
  CornerCache cache;
  const auto env_small = lemma1_envelope(sys, bounds_small, small, 1.0, &cache);
  const auto env_full = lemma1_envelope(sys, bounds_full, unit_rho_box(), 1.0, &cache);
  CHECK(env_full.x.lower()[0] <= env_small.x.lower()[0] + 1e-12);
  CHECK(env_full.x.upper()[0] >= env_small.x.upper()[0] - 1e-12);
}

TEST_CASE("drift system containment holds for interior parameters") {
  const auto sys = drift_system();
  SeededRng rng(3);
  const auto bounds = estimate_bounds(sys, unit_rho_box(), 10, rng);
  CornerCache cache;
  std::vector<ReachEnvelope> envs;
  for (const double t : {0.25, 0.75, 1.0})
    envs.push_back(lemma1_envelope(sys, bounds, unit_rho_box(), t, &cache));
  std::vector<VecX> params;
  for (const double r : {1.0, 1.3, 1.77, 2.0}) params.push_back(VecX::Constant(1, r));
  const auto report = check_containment(sys, envs, params);
  CHECK(report.checked == 4);
  CHECK(report.violations == 0);
}

TEST_CASE("point parameter box collapses bounds and envelopes") {
  const auto sys = drift_system();
  const IntervalBox point(VecX::Constant(1, 1.4), VecX::Constant(1, 1.4));
  SeededRng rng(9);
  const auto bounds = estimate_bounds(sys, point, 4, rng);
  CHECK(bounds.sx_lo.at_node(8)(0, 0) == bounds.sx_hi.at_node(8)(0, 0));
  CornerCache cache;
  const auto env = lemma1_envelope(sys, bounds, point, 1.0, &cache);
  CHECK(env.x.lower()[0] == doctest::Approx(1.4).epsilon(1e-12));
  CHECK(env.x.upper()[0] == doctest::Approx(1.4).epsilon(1e-12));
}

TEST_CASE("frozen parameter dependence zeroes the state sensitivity") {
  ReachSystem sys = make_closed_loop_system(baseline_gains(), nominal_ref(),
                                            presets::initial_state());
  const auto base_field = sys.field;
  const auto base_jac = sys.field_jacobians;
  const VecX frozen = nominal_ref().params.to_vector();
  sys.field = [base_field, frozen](double t, const VecX& x, const VecX&, VecX& out) {
    base_field(t, x, frozen, out);
  };
  sys.field_jacobians = [base_jac, frozen](double t, const VecX& x, const VecX&, MatX& a,
                                           MatX& b) {
    base_jac(t, x, frozen, a, b);
    b.setZero();
  };
  const auto sol = integrate_sensitivity(sys, frozen);
  double worst = 0.0;
  for (std::size_t i = 0; i < sys.grid.size(); i += 50)
    worst = std::max(worst, sol.sx.at_node(i).lpNorm<Eigen::Infinity>());
  CHECK(worst <= 1e-12);
  CHECK(sol.su.at_node(sys.grid.size() - 1).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("robot sensitivity columns match trajectory differencing") {
  ReachSystem sys = make_closed_loop_system(baseline_gains(), nominal_ref(),
                                            presets::initial_state());
  // Tight tolerances so the quotient noise sits well below the 1e-3 bar.
  sys.ode.abs_tol = 1e-12;
  sys.ode.rel_tol = 1e-10;
  const VecX p_hat = nominal_ref().params.to_vector();
  const auto sol = integrate_sensitivity(sys, p_hat);

  SeededRng rng(7);
  const std::vector<double> instants = {0.875, 1.75, 2.625, 3.5};
  for (int probe = 0; probe < 5; ++probe) {
    const auto j = static_cast<Eigen::Index>(rng.uniform_index(12));
    const double eps = 1e-5 * p_hat[j];
    VecX pp = p_hat, pm = p_hat;
    pp[j] += eps;
    pm[j] -= eps;
    const auto traj_p = plain_trajectory(sys, pp);
    const auto traj_m = plain_trajectory(sys, pm);
    for (const double t : instants) {
      const VecX fd = (traj_p.value(t) - traj_m.value(t)) / (2.0 * eps);
      const VecX col = sol.sx.value(t).col(j);
      const double scale = std::max(fd.lpNorm<Eigen::Infinity>(), 1e-6);
      CHECK((col - fd).lpNorm<Eigen::Infinity>() / scale < 1e-3);
    }
  }
}

TEST_CASE("robot bounds contain the nominal sensitivity") {
  SeededRng rng(41);
  const auto box = presets::param_box();
  const auto bounds = estimate_bounds(baseline_gains(), nominal_ref(), presets::initial_state(),
                                      box, 8, rng);
  const ReachSystem sys = make_closed_loop_system(baseline_gains(), nominal_ref(),
                                                  presets::initial_state());
  const auto sol = integrate_sensitivity(sys, nominal_ref().params.to_vector());
  for (std::size_t i = 0; i < sys.grid.size(); i += 125) {
    const MatX s = sol.sx.at_node(i);
    const MatX lo = bounds.sx_lo.at_node(i), hi = bounds.sx_hi.at_node(i);
    CHECK(((s - lo).minCoeff() >= -1e-12));
    CHECK(((hi - s).minCoeff() >= -1e-12));
  }
}

TEST_CASE("metric building blocks behave") {
  ReachEnvelope env;
  env.t = 0.5;
  env.x = IntervalBox(VecX::Zero(6), VecX::Zero(6));
  env.y = IntervalBox(VecX::Constant(4, -1.0), VecX::Ones(4));
  env.u = IntervalBox(VecX::Constant(4, 2.0), VecX::Constant(4, 4.0));

  planner::ReferenceBundle fake;
  const auto grid = TimeGrid::uniform(0.0, 1.0, 0.5);
  fake.state = Trajectory(grid, MatX::Zero(6, 3));
  fake.output = Trajectory(grid, MatX::Zero(4, 3));
  fake.input = Trajectory(grid, MatX::Constant(4, 3, 3.0));

  const auto b = metric_breakdown({env}, fake);
  CHECK(b.vol_sums[0] == 0.0);
  CHECK(b.vol_sums[1] == doctest::Approx(16.0));
  CHECK(b.vol_sums[2] == doctest::Approx(16.0));
  // Centered envelopes carry no offset product.
  CHECK(b.off_sums[1] == 0.0);
  CHECK(b.off_sums[2] == 0.0);

  MetricWeights w;
  w.w_v = Vec3::Ones();
  w.w_o = Vec3::Ones();
  CHECK(performance_metric({env}, fake, w) >= 0.0);
  // A baseline with vanishing sums cannot be normalized.
  CHECK_THROWS_AS(calibrate_weights({env}, fake), ZeroBaselineTerm);
}

TEST_CASE("desk scale pipeline calibrates to six and ranks the tuned weights ahead") {
  const auto& ref = nominal_ref();
  const auto box = presets::param_box();
  const Vec6 x0 = presets::initial_state();
  const std::vector<VecX> probes = {ref.params.to_vector(), box.lower(), box.upper()};

  const ReachSystem sys = make_closed_loop_system(baseline_gains(), ref, x0);
  SeededRng rng(2024);
  ProbeLog log;
  for (const double t : presets::evaluation_instants()) log.instants.push_back(t);
  const auto bounds = estimate_bounds(sys, box, 20, rng, probes, 1, &log);

  CornerCache cache;
  std::vector<ReachEnvelope> envs;
  for (const double t : presets::evaluation_instants())
    envs.push_back(lemma1_envelope(sys, bounds, box, t, &cache));

  const auto w = calibrate_weights(envs, ref);
  CHECK(std::abs(performance_metric(envs, ref, w) - 6.0) <= 1e-12);

  // Every bounding sample stays inside the envelopes.
  const auto report = check_containment(sys, envs, log.params);
  CHECK(report.checked == 23);
  CHECK(report.violations == 0);

  // Envelope volume sums match the published magnitudes as a set; the
  // offset sums depend too strongly on the baseline controller to pin.
  const auto breakdown = metric_breakdown(envs, ref);
  VecX mine = breakdown.vol_sums;
  VecX published(3);
  published << 1.0 / 6.98e7, 1.0 / 9.67e-7, 1.0 / 9.71e4;
  std::sort(mine.begin(), mine.end());
  std::sort(published.begin(), published.end());
  for (int i = 0; i < 3; ++i) CHECK(std::abs(std::log10(mine[i] / published[i])) < 2.0);

  // The tuned weights must beat the baseline under its own calibration.
  const ReachSystem sys_star = make_closed_loop_system(star_gains(), ref, x0);
  SeededRng rng_star(2024);
  const auto bounds_star = estimate_bounds(sys_star, box, 20, rng_star, probes);
  CornerCache cache_star;
  std::vector<ReachEnvelope> envs_star;
  for (const double t : presets::evaluation_instants())
    envs_star.push_back(lemma1_envelope(sys_star, bounds_star, box, t, &cache_star));
  const double jp_star = performance_metric(envs_star, ref, w);
  CHECK(jp_star < 6.0);
  CHECK(jp_star > 0.5);
  CHECK(jp_star < 3.0);
}

TEST_CASE("pool search ranks candidates, tolerates failures, and repeats exactly") {
  const auto& ref = nominal_ref();
  MetricWeights w;
  // Desk calibration magnitudes; exact values are irrelevant to the ordering.
  w.w_v << 1.45e6, 3.75e4, 9.79e-7;
  w.w_o << 3.79e13, 6.39e9, 4.89e-2;
  w.instants = {0.875, 1.75, 2.625, 3.5};

  std::vector<lqr::LqrWeights> pool;
  pool.push_back({presets::baseline_q(), presets::baseline_r(), presets::baseline_s()});
  pool.push_back({presets::lqr_q_star(), presets::lqr_r_star(), presets::lqr_s_star()});
  // Zero input weight cannot be synthesized and must be recorded as failed.
  pool.push_back({VecX::Ones(6), VecX::Zero(4), VecX::Ones(6)});

  const PoolContext ctx{ref,  nominal_lin(),          presets::initial_state(),
                        presets::param_box(), 6,       w,
                        91,   1};
  const auto res = pool_search(pool, ctx);
  CHECK(res.best_index == 1);
  CHECK(res.ranked.size() == 3);
  CHECK(res.ranked.back().failed);
  CHECK(res.ranked.back().index == 2);
  CHECK(res.ranked.front().jp < res.ranked[1].jp);

  const auto res2 = pool_search(pool, ctx);
  CHECK(res2.best_index == res.best_index);
  CHECK(res2.best_jp == res.best_jp);
  CHECK(res2.ranked[1].jp == res.ranked[1].jp);

  const auto solo = pool_search({pool[0]}, ctx);
  CHECK(solo.best_index == 0);
}

TEST_SUITE_END();
