#include "sts/reachability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>

#include "sts/dynamics.hpp"

namespace sts::reach {

using numerics::IntervalBox;
using numerics::MatrixSchedule;
using numerics::SeededRng;
using numerics::TimeGrid;
using numerics::Trajectory;

ReachSystem make_closed_loop_system(const lqr::GainSchedule& gains,
                                    const planner::ReferenceBundle& ref, const Vec6& x0,
                                    double storage_step) {
  // One shared copy of the schedules keeps the callbacks valid after the
  // arguments go out of scope.
  struct Ctx {
    lqr::GainSchedule gains;
    planner::ReferenceBundle ref;
  };
  auto ctx = std::make_shared<Ctx>(Ctx{gains, ref});

  const auto& rgrid = ref.state.grid();
  ReachSystem sys;
  sys.x0 = x0;
  sys.grid = TimeGrid::uniform(rgrid.t0(), rgrid.node(rgrid.size() - 1), storage_step);
  sys.nx = 6;
  sys.ny = 4;
  sys.nu = 4;
  sys.np = 12;

  const auto control = [ctx](double t, const VecX& x) {
    const Vec6 dx = Vec6(x) - Vec6(ctx->ref.state.value(t));
    return Vec4(Vec4(ctx->ref.input.value(t)) - Vec4(ctx->gains.gain.value(t) * dx));
  };

  sys.field = [control](double t, const VecX& x, const VecX& rho, VecX& out) {
    const auto p = dynamics::ParamVector::from_vector(Vec12(rho));
    out = dynamics::state_derivative(Vec6(x), p, control(t, x));
  };
  sys.field_jacobians = [control](double t, const VecX& x, const VecX& rho, MatX& a, MatX& b) {
    // Differentiating the closed-loop field in x folds the feedback term in
    // directly; the kinematic rows are exact.
    a = numerics::fd_jacobian(
        [&](const VecX& v, VecX& out) {
          out = dynamics::state_derivative(Vec6(v), dynamics::ParamVector::from_vector(Vec12(rho)),
                                           control(t, v));
        },
        x, 6);
    a.topRows(3).setZero();
    a.topRightCorner(3, 3).setIdentity();
    const Vec4 u = control(t, x);
    b = numerics::fd_jacobian(
        [&](const VecX& v, VecX& out) {
          out = dynamics::state_derivative(Vec6(x), dynamics::ParamVector::from_vector(Vec12(v)),
                                           u);
        },
        rho, 6);
    b.topRows(3).setZero();
  };
  sys.output = [](double, const VecX& x, const VecX& rho) {
    return VecX(dynamics::com_kinematics(Vec6(x), dynamics::ParamVector::from_vector(Vec12(rho))));
  };
  sys.output_jacobians = [](double, const VecX& x, const VecX& rho, MatX& hx, MatX& hp) {
    hx = numerics::fd_jacobian(
        [&](const VecX& v, VecX& out) {
          out = dynamics::com_kinematics(Vec6(v), dynamics::ParamVector::from_vector(Vec12(rho)));
        },
        x, 4);
    hp = numerics::fd_jacobian(
        [&](const VecX& v, VecX& out) {
          out = dynamics::com_kinematics(Vec6(x), dynamics::ParamVector::from_vector(Vec12(v)));
        },
        rho, 4);
  };
  sys.input = [control](double t, const VecX& x) { return VecX(control(t, x)); };
  sys.input_state_jacobian = [ctx](double t) { return MatX(-ctx->gains.gain.value(t)); };
  return sys;
}

SensitivitySolution integrate_sensitivity(const ReachSystem& sys, const VecX& rho) {
  const Eigen::Index nx = sys.nx, np = sys.np;
  const Eigen::Index m = nx + nx * np;

  MatX a(nx, nx), b(nx, np);
  VecX dx(nx);
  const numerics::OdeField aug = [&](double t, const VecX& xa, VecX& out) {
    const VecX x = xa.head(nx);
    out.resize(m);
    sys.field(t, x, rho, dx);
    out.head(nx) = dx;
    sys.field_jacobians(t, x, rho, a, b);
    const Eigen::Map<const MatX> sx(xa.data() + nx, nx, np);
    const MatX dsx = a * sx + b;
    out.tail(nx * np) = Eigen::Map<const VecX>(dsx.data(), nx * np);
  };

  VecX xa0 = VecX::Zero(m);
  xa0.head(nx) = sys.x0;
  const Trajectory swept =
      numerics::integrate(aug, xa0, sys.grid, numerics::IntegrateMethod::Rk45, sys.ode);

  const auto n = sys.grid.size();
  MatX state(nx, n), sx_flat(nx * np, n), sy_flat(sys.ny * np, n), su_flat(sys.nu * np, n);
  MatX hx(sys.ny, nx), hp(sys.ny, np);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = sys.grid.node(i);
    const VecX xa = swept.node(i);
    const VecX x = xa.head(nx);
    state.col(i) = x;
    sx_flat.col(i) = xa.tail(nx * np);
    const Eigen::Map<const MatX> sx(sx_flat.col(i).data(), nx, np);
    sys.output_jacobians(t, x, rho, hx, hp);
    const MatX sy = hx * sx + hp;
    sy_flat.col(i) = Eigen::Map<const VecX>(sy.data(), sys.ny * np);
    const MatX su = sys.input_state_jacobian(t) * sx;
    su_flat.col(i) = Eigen::Map<const VecX>(su.data(), sys.nu * np);
  }

  SensitivitySolution sol;
  sol.state = Trajectory(sys.grid, std::move(state));
  sol.sx = MatrixSchedule(nx, np, Trajectory(sys.grid, std::move(sx_flat)));
  sol.sy = MatrixSchedule(sys.ny, np, Trajectory(sys.grid, std::move(sy_flat)));
  sol.su = MatrixSchedule(sys.nu, np, Trajectory(sys.grid, std::move(su_flat)));
  sol.rho = rho;
  return sol;
}

SensitivityBounds estimate_bounds(const ReachSystem& sys, const IntervalBox& rho_box,
                                  int n_samples, SeededRng& rng,
                                  const std::vector<VecX>& extra_probes, int workers,
                                  ProbeLog* log) {
  if (n_samples < 2) throw Error("estimate_bounds: need at least two samples");
  std::vector<VecX> draws = numerics::latin_hypercube(n_samples, rho_box, rng);
  draws.insert(draws.end(), extra_probes.begin(), extra_probes.end());
  const std::size_t total = draws.size();

  const auto n = sys.grid.size();
  const double inf = std::numeric_limits<double>::infinity();
  MatX sx_lo = MatX::Constant(sys.nx * sys.np, n, inf), sx_hi = -sx_lo;
  MatX sy_lo = MatX::Constant(sys.ny * sys.np, n, inf), sy_hi = -sy_lo;
  MatX su_lo = MatX::Constant(sys.nu * sys.np, n, inf), su_hi = -su_lo;

  if (log) {
    log->params = draws;
    log->x.assign(log->instants.size(), MatX(sys.nx, total));
    log->y.assign(log->instants.size(), MatX(sys.ny, total));
    log->u.assign(log->instants.size(), MatX(sys.nu, total));
  }

  std::mutex reduce_mutex;
  numerics::parallel_for(total, workers, [&](std::size_t k) {
    const SensitivitySolution sol = integrate_sensitivity(sys, draws[k]);
    if (log) {
      for (std::size_t ti = 0; ti < log->instants.size(); ++ti) {
        const double t = log->instants[ti];
        const VecX x = sol.state.value(t);
        log->x[ti].col(k) = x;
        log->y[ti].col(k) = sys.output(t, x, draws[k]);
        log->u[ti].col(k) = sys.input(t, x);
      }
    }
    // Entrywise extrema commute, so the reduction order cannot matter.
    std::lock_guard<std::mutex> lock(reduce_mutex);
    sx_lo = sx_lo.cwiseMin(sol.sx.traj.values());
    sx_hi = sx_hi.cwiseMax(sol.sx.traj.values());
    sy_lo = sy_lo.cwiseMin(sol.sy.traj.values());
    sy_hi = sy_hi.cwiseMax(sol.sy.traj.values());
    su_lo = su_lo.cwiseMin(sol.su.traj.values());
    su_hi = su_hi.cwiseMax(sol.su.traj.values());
  });

  SensitivityBounds bounds;
  bounds.sx_lo = MatrixSchedule(sys.nx, sys.np, Trajectory(sys.grid, std::move(sx_lo)));
  bounds.sx_hi = MatrixSchedule(sys.nx, sys.np, Trajectory(sys.grid, std::move(sx_hi)));
  bounds.sy_lo = MatrixSchedule(sys.ny, sys.np, Trajectory(sys.grid, std::move(sy_lo)));
  bounds.sy_hi = MatrixSchedule(sys.ny, sys.np, Trajectory(sys.grid, std::move(sy_hi)));
  bounds.su_lo = MatrixSchedule(sys.nu, sys.np, Trajectory(sys.grid, std::move(su_lo)));
  bounds.su_hi = MatrixSchedule(sys.nu, sys.np, Trajectory(sys.grid, std::move(su_hi)));
  return bounds;
}

SensitivityBounds estimate_bounds(const lqr::GainSchedule& gains,
                                  const planner::ReferenceBundle& ref, const Vec6& x0,
                                  const IntervalBox& p_box, int n_samples, SeededRng& rng,
                                  int workers, ProbeLog* log) {
  const ReachSystem sys = make_closed_loop_system(gains, ref, x0);
  const std::vector<VecX> probes = {VecX(ref.params.to_vector()), p_box.lower(), p_box.upper()};
  return estimate_bounds(sys, p_box, n_samples, rng, probes, workers, log);
}

const CornerCache::Solution& CornerCache::at(const ReachSystem& sys, const VecX& rho) {
  std::vector<double> key(rho.data(), rho.data() + rho.size());
  const auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;

  const numerics::OdeField field = [&](double t, const VecX& x, VecX& out) {
    sys.field(t, x, rho, out);
  };
  Solution sol;
  sol.state = numerics::integrate(field, sys.x0, sys.grid, numerics::IntegrateMethod::Rk45,
                                  sys.ode);
  const auto n = sys.grid.size();
  MatX y(sys.ny, n), u(sys.nu, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = sys.grid.node(i);
    const VecX x = sol.state.node(i);
    y.col(i) = sys.output(t, x, rho);
    u.col(i) = sys.input(t, x);
  }
  sol.output = Trajectory(sys.grid, std::move(y));
  sol.input = Trajectory(sys.grid, std::move(u));
  return cache_.emplace(std::move(key), std::move(sol)).first->second;
}

namespace {

// One quantity's envelope rows per the lemma's per-row corner construction.
IntervalBox envelope_rows(const ReachSystem& sys, const MatrixSchedule& lo,
                          const MatrixSchedule& hi, const IntervalBox& rho_box, double t,
                          CornerCache& cache,
                          const std::function<double(const CornerCache::Solution&, Eigen::Index)>&
                              component) {
  const Eigen::Index rows = lo.rows, np = lo.cols;
  const MatX slo = lo.value(t), shi = hi.value(t);
  VecX r_lo(rows), r_hi(rows);
  VecX pi_lo(np), pi_hi(np), d(np);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < np; ++j) {
      const double center = 0.5 * (slo(i, j) + shi(i, j));
      if (center >= 0.0) {
        pi_lo[j] = rho_box.lower()[j];
        pi_hi[j] = rho_box.upper()[j];
        d[j] = std::min(0.0, slo(i, j));
      } else {
        pi_lo[j] = rho_box.upper()[j];
        pi_hi[j] = rho_box.lower()[j];
        d[j] = std::max(0.0, shi(i, j));
      }
    }
    const double corr = d.dot(pi_lo - pi_hi);
    r_lo[i] = component(cache.at(sys, pi_lo), i) - corr;
    r_hi[i] = component(cache.at(sys, pi_hi), i) + corr;
  }
  return IntervalBox(r_lo, r_hi);
}

}  // namespace

ReachEnvelope lemma1_envelope(const ReachSystem& sys, const SensitivityBounds& bounds,
                              const IntervalBox& rho_box, double t, CornerCache* cache) {
  CornerCache local;
  CornerCache& c = cache ? *cache : local;
  ReachEnvelope env;
  env.t = t;
  env.x = envelope_rows(sys, bounds.sx_lo, bounds.sx_hi, rho_box, t, c,
                        [&](const CornerCache::Solution& s, Eigen::Index i) {
                          return s.state.value(t)[i];
                        });
  env.y = envelope_rows(sys, bounds.sy_lo, bounds.sy_hi, rho_box, t, c,
                        [&](const CornerCache::Solution& s, Eigen::Index i) {
                          return s.output.value(t)[i];
                        });
  env.u = envelope_rows(sys, bounds.su_lo, bounds.su_hi, rho_box, t, c,
                        [&](const CornerCache::Solution& s, Eigen::Index i) {
                          return s.input.value(t)[i];
                        });
  return env;
}

namespace {

double offset_product(const IntervalBox& box, const VecX& ref) {
  double prod = 1.0;
  for (Eigen::Index i = 0; i < box.dim(); ++i)
    prod *= std::abs(0.5 * (box.lower()[i] + box.upper()[i]) - ref[i]);
  return prod;
}

}  // namespace

MetricBreakdown metric_breakdown(const std::vector<ReachEnvelope>& envelopes,
                                 const planner::ReferenceBundle& ref) {
  MetricBreakdown out;
  for (const auto& env : envelopes) {
    out.vol_sums[0] += env.x.volume();
    out.vol_sums[1] += env.y.volume();
    out.vol_sums[2] += env.u.volume();
    out.off_sums[0] += offset_product(env.x, ref.state.value(env.t));
    out.off_sums[1] += offset_product(env.y, ref.output.value(env.t));
    out.off_sums[2] += offset_product(env.u, ref.input.value(env.t));
  }
  return out;
}

double performance_metric(const std::vector<ReachEnvelope>& envelopes,
                          const planner::ReferenceBundle& ref, const MetricWeights& w) {
  const MetricBreakdown b = metric_breakdown(envelopes, ref);
  return w.w_v.dot(b.vol_sums) + w.w_o.dot(b.off_sums);
}

MetricWeights calibrate_weights(const std::vector<ReachEnvelope>& baseline_envelopes,
                                const planner::ReferenceBundle& ref) {
  const MetricBreakdown b = metric_breakdown(baseline_envelopes, ref);
  for (int i = 0; i < 3; ++i)
    if (b.vol_sums[i] == 0.0 || b.off_sums[i] == 0.0)
      throw ZeroBaselineTerm("calibrate_weights: baseline sum vanished");
  MetricWeights w;
  w.w_v = b.vol_sums.cwiseInverse();
  w.w_o = b.off_sums.cwiseInverse();
  w.instants.reserve(baseline_envelopes.size());
  for (const auto& env : baseline_envelopes) w.instants.push_back(env.t);
  return w;
}

ContainmentReport check_containment(const ReachSystem& sys,
                                    const std::vector<ReachEnvelope>& envelopes,
                                    const std::vector<VecX>& params, int workers, double slack) {
  std::vector<char> violated(params.size(), 0);
  numerics::parallel_for(params.size(), workers, [&](std::size_t k) {
    const VecX& rho = params[k];
    const numerics::OdeField field = [&](double t, const VecX& x, VecX& out) {
      sys.field(t, x, rho, out);
    };
    const Trajectory traj = numerics::integrate(field, sys.x0, sys.grid,
                                                numerics::IntegrateMethod::Rk45, sys.ode);
    const auto outside = [slack](const VecX& v, const IntervalBox& box) {
      for (Eigen::Index i = 0; i < box.dim(); ++i)
        if (v[i] < box.lower()[i] - slack || v[i] > box.upper()[i] + slack) return true;
      return false;
    };
    for (const auto& env : envelopes) {
      const VecX x = traj.value(env.t);
      if (outside(x, env.x) || outside(sys.output(env.t, x, rho), env.y) ||
          outside(sys.input(env.t, x), env.u)) {
        violated[k] = 1;
        return;
      }
    }
  });
  ContainmentReport report;
  report.checked = static_cast<int>(params.size());
  for (const char v : violated) report.violations += v;
  return report;
}

PoolResult pool_search(const std::vector<lqr::LqrWeights>& pool, const PoolContext& ctx) {
  if (pool.empty()) throw Error("pool_search: empty candidate pool");
  const std::vector<VecX> probes = {VecX(ctx.ref.params.to_vector()), ctx.p_box.lower(),
                                    ctx.p_box.upper()};

  PoolResult res;
  res.ranked.reserve(pool.size());
  for (std::size_t idx = 0; idx < pool.size(); ++idx) {
    PoolEntry entry;
    entry.index = static_cast<int>(idx);
    entry.weights = pool[idx];
    try {
      const auto gains = lqr::solve_riccati(ctx.lin, pool[idx]);
      const ReachSystem sys = make_closed_loop_system(gains, ctx.ref, ctx.x0);
      // Every candidate sees the same parameter draws.
      SeededRng rng(ctx.seed);
      const SensitivityBounds bounds =
          estimate_bounds(sys, ctx.p_box, ctx.n_samples, rng, probes, ctx.workers);
      CornerCache cache;
      std::vector<ReachEnvelope> envelopes;
      envelopes.reserve(ctx.weights.instants.size());
      for (const double t : ctx.weights.instants)
        envelopes.push_back(lemma1_envelope(sys, bounds, ctx.p_box, t, &cache));
      entry.breakdown = metric_breakdown(envelopes, ctx.ref);
      entry.jp = performance_metric(envelopes, ctx.ref, ctx.weights);
    } catch (const Error&) {
      entry.failed = true;
      entry.jp = std::numeric_limits<double>::infinity();
    }
    res.ranked.push_back(std::move(entry));
  }

  std::stable_sort(res.ranked.begin(), res.ranked.end(), [](const PoolEntry& a, const PoolEntry& b) {
    if (a.failed != b.failed) return !a.failed;
    return a.jp < b.jp;
  });
  if (res.ranked.front().failed) throw Error("pool_search: every candidate failed");
  res.best_index = res.ranked.front().index;
  res.best_jp = res.ranked.front().jp;
  return res;
}

}  // namespace sts::reach
