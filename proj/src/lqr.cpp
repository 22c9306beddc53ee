#include "sts/lqr.hpp"

#include <cmath>

namespace sts::lqr {

using numerics::MatrixSchedule;
using numerics::TimeGrid;
using numerics::Trajectory;

LinearizationSchedule linearize(const planner::ReferenceBundle& ref,
                                const dynamics::ParamVector& p) {
  const TimeGrid& grid = ref.state.grid();
  const auto n = grid.size();
  MatX a_flat(36, n), bp_flat(72, n), bu_flat(24, n);
  const Vec12 pvec = p.to_vector();

  for (std::size_t i = 0; i < n; ++i) {
    const Vec6 x = ref.state.node(i);
    const Vec4 u = ref.input.node(i);

    MatX a = numerics::fd_jacobian(
        [&](const VecX& v, VecX& out) { out = dynamics::state_derivative(Vec6(v), p, u); }, x, 6);
    MatX bp = numerics::fd_jacobian(
        [&](const VecX& v, VecX& out) {
          out = dynamics::state_derivative(x, dynamics::ParamVector::from_vector(Vec12(v)), u);
        },
        pvec, 6);
    MatX bu = numerics::fd_jacobian(
        [&](const VecX& v, VecX& out) { out = dynamics::state_derivative(x, p, Vec4(v)); }, u, 6);

    // The kinematic rows are exact: the first three components of the field
    // are the joint rates themselves.
    a.topRows(3).setZero();
    a.topRightCorner(3, 3).setIdentity();
    bp.topRows(3).setZero();
    bu.topRows(3).setZero();

    a_flat.col(i) = Eigen::Map<const VecX>(a.data(), 36);
    bp_flat.col(i) = Eigen::Map<const VecX>(bp.data(), 72);
    bu_flat.col(i) = Eigen::Map<const VecX>(bu.data(), 24);
  }

  LinearizationSchedule lin;
  lin.a = MatrixSchedule(6, 6, Trajectory(grid, std::move(a_flat)));
  lin.b_param = MatrixSchedule(6, 12, Trajectory(grid, std::move(bp_flat)));
  lin.b_input = MatrixSchedule(6, 4, Trajectory(grid, std::move(bu_flat)));
  return lin;
}

GainSchedule solve_riccati(const LinearizationSchedule& lin, const LqrWeights& w,
                           const RiccatiOptions& opts) {
  const TimeGrid& grid = lin.a.traj.grid();
  const auto n = grid.size();
  const Eigen::Index nx = lin.a.rows;
  const Eigen::Index nu = lin.b_input.cols;
  if (w.q.size() != nx || w.s.size() != nx || w.r.size() != nu)
    throw Error("solve_riccati: weight dimensions do not match the schedule");

  const MatX q = MatX(w.q.asDiagonal());
  const VecX r_inv = w.r.cwiseInverse();

  // March in reversed time sigma = tf - t so the adaptive integrator sees an
  // increasing span. P is carried flattened column-major.
  const double tf = grid.node(n - 1);
  std::vector<double> sigma(n);
  for (std::size_t i = 0; i < n; ++i) sigma[i] = tf - grid.node(n - 1 - i);
  const TimeGrid backward = TimeGrid::from_nodes(std::move(sigma));

  const numerics::OdeField field = [&](double s, const VecX& pl, VecX& out) {
    const Eigen::Map<const MatX> pm(pl.data(), nx, nx);
    const double t = tf - s;
    const MatX a = lin.a.value(t);
    const MatX b = lin.b_input.value(t);
    const MatX sym = 0.5 * (pm + pm.transpose());
    const MatX dp =
        sym * a + a.transpose() * sym - sym * b * r_inv.asDiagonal() * b.transpose() * sym + q;
    out = Eigen::Map<const VecX>(dp.data(), nx * nx);
  };

  numerics::IntegrateOptions iopts;
  iopts.abs_tol = opts.abs_tol;
  iopts.rel_tol = opts.rel_tol;
  const MatX p_tf = MatX(w.s.asDiagonal());
  Trajectory swept;
  try {
    swept = numerics::integrate(field, VecX(Eigen::Map<const VecX>(p_tf.data(), nx * nx)),
                                backward, numerics::IntegrateMethod::Rk45, iopts);
  } catch (const NonFiniteState&) {
    throw RiccatiBlowup("solve_riccati: backward sweep diverged");
  }

  MatX p_flat(nx * nx, n), k_flat(nu * nx, n);
  for (std::size_t i = 0; i < n; ++i) {
    const VecX pl = swept.node(n - 1 - i);
    const Eigen::Map<const MatX> pm(pl.data(), nx, nx);
    const MatX p = 0.5 * (pm + pm.transpose());
    if (!p.allFinite() || p.lpNorm<Eigen::Infinity>() > opts.blowup_norm)
      throw RiccatiBlowup("solve_riccati: backward sweep diverged");
    p_flat.col(i) = Eigen::Map<const VecX>(p.data(), nx * nx);
    const MatX k = r_inv.asDiagonal() * lin.b_input.at_node(i).transpose() * p;
    k_flat.col(i) = Eigen::Map<const VecX>(k.data(), nu * nx);
  }

  GainSchedule gs;
  gs.riccati = MatrixSchedule(nx, nx, Trajectory(grid, std::move(p_flat)));
  gs.gain = MatrixSchedule(nu, nx, Trajectory(grid, std::move(k_flat)));
  return gs;
}

Vec6 closed_loop_derivative(double t, const Vec6& x, const dynamics::ParamVector& p,
                            const planner::ReferenceBundle& ref, const GainSchedule& gains) {
  const Vec6 dx = x - Vec6(ref.state.value(t));
  const Vec4 u = Vec4(ref.input.value(t)) - Vec4(gains.gain.value(t) * dx);
  return dynamics::state_derivative(x, p, u);
}

std::vector<LqrWeights> sample_weight_pool(int count, const WeightPoolRanges& ranges,
                                           numerics::SeededRng& rng) {
  VecX lo = VecX::Zero(16), hi(16);
  hi << VecX::Constant(6, ranges.q_max), VecX::Constant(4, ranges.r_max),
      VecX::Constant(6, ranges.s_max);
  const auto samples = numerics::latin_hypercube(count, numerics::IntervalBox(lo, hi), rng);
  std::vector<LqrWeights> pool;
  pool.reserve(samples.size());
  for (const auto& s : samples) {
    LqrWeights w;
    w.q = s.head(6);
    w.r = s.segment(6, 4);
    w.s = s.tail(6);
    pool.push_back(std::move(w));
  }
  return pool;
}

}  // namespace sts::lqr
