#include "sts/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

namespace sts::numerics {

namespace {

std::string time_msg(const char* what, double t) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%s at t=%.9g", what, t);
  return buf;
}

}  // namespace

TimeGrid TimeGrid::uniform(double t0, double tf, double step) {
  if (!(step > 0.0) || !(tf > t0)) throw Error("TimeGrid::uniform: need tf > t0 and step > 0");
  const double span = tf - t0;
  const auto count = static_cast<std::size_t>(std::llround(span / step));
  if (count < 1 || std::abs(t0 + double(count) * step - tf) > 1e-9 * std::max(1.0, std::abs(tf)))
    throw Error("TimeGrid::uniform: step does not divide the span");
  TimeGrid g;
  g.nodes_.resize(count + 1);
  for (std::size_t k = 0; k <= count; ++k) g.nodes_[k] = t0 + double(k) * step;
  g.nodes_.back() = tf;
  g.step_ = step;
  g.uniform_ = true;
  return g;
}

TimeGrid TimeGrid::from_nodes(std::vector<double> nodes) {
  if (nodes.size() < 2) throw Error("TimeGrid::from_nodes: need at least two nodes");
  for (std::size_t i = 1; i < nodes.size(); ++i)
    if (!(nodes[i] > nodes[i - 1])) throw Error("TimeGrid::from_nodes: nodes must increase strictly");
  TimeGrid g;
  g.nodes_ = std::move(nodes);
  g.step_ = g.nodes_[1] - g.nodes_[0];
  g.uniform_ = false;
  return g;
}

std::pair<std::size_t, double> TimeGrid::locate(double t) const {
  const double slack = 1e-9 * std::max(1.0, std::max(std::abs(t0()), std::abs(tf())));
  if (t < t0() - slack || t > tf() + slack) throw OutOfDomain(time_msg("interpolation query", t));
  t = std::clamp(t, t0(), tf());
  std::size_t k;
  if (uniform_) {
    k = static_cast<std::size_t>(std::max(0.0, std::floor((t - t0()) / step_)));
    k = std::min(k, nodes_.size() - 2);
    while (k > 0 && t < nodes_[k]) --k;
    while (k + 2 < nodes_.size() && t > nodes_[k + 1]) ++k;
  } else {
    const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
    k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - nodes_.begin()) - 1));
    k = std::min(k, nodes_.size() - 2);
  }
  const double denom = nodes_[k + 1] - nodes_[k];
  return {k, std::clamp((t - nodes_[k]) / denom, 0.0, 1.0)};
}

TimeGrid TimeGrid::truncated(std::size_t count) const {
  if (count < 1 || count > nodes_.size()) throw Error("TimeGrid::truncated: bad count");
  if (count == 1) {
    // Single-node grids are not representable; callers treat this as degenerate.
    throw Error("TimeGrid::truncated: cannot truncate to a single node");
  }
  TimeGrid g;
  g.nodes_.assign(nodes_.begin(), nodes_.begin() + count);
  g.step_ = step_;
  g.uniform_ = uniform_;
  return g;
}

Trajectory::Trajectory(TimeGrid grid, MatX values, Interp policy)
    : grid_(std::move(grid)), values_(std::move(values)), policy_(policy) {
  if (static_cast<std::size_t>(values_.cols()) != grid_.size())
    throw Error("Trajectory: one column per grid node required");
}

VecX Trajectory::value(double t) const {
  VecX out(values_.rows());
  value_into(t, out);
  return out;
}

void Trajectory::value_into(double t, Eigen::Ref<VecX> out) const {
  const auto [k, a] = grid_.locate(t);
  if (policy_ == Interp::PreviousNode) {
    out = values_.col(a >= 1.0 ? k + 1 : k);
  } else {
    out = (1.0 - a) * values_.col(k) + a * values_.col(k + 1);
  }
}

Trajectory Trajectory::truncated(std::size_t count) const {
  return Trajectory(grid_.truncated(count), values_.leftCols(count), policy_);
}

IntervalBox::IntervalBox(VecX lower, VecX upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() != upper_.size()) throw Error("IntervalBox: dimension mismatch");
  for (Eigen::Index i = 0; i < lower_.size(); ++i)
    if (!(lower_[i] <= upper_[i])) throw Error("IntervalBox: lower > upper");
}

bool IntervalBox::contains(const VecX& x, double tol) const {
  if (x.size() != lower_.size()) return false;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x[i] < lower_[i] - tol || x[i] > upper_[i] + tol) return false;
  return true;
}

VecX IntervalBox::clamp(const VecX& x) const {
  return x.cwiseMax(lower_).cwiseMin(upper_);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

std::uint64_t SeededRng::next_u64() { return engine_(); }

double SeededRng::uniform01() {
  // 53 significant bits, shifted off zero so the result stays inside (0,1).
  return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

std::uint64_t SeededRng::uniform_index(std::uint64_t n) {
  if (n == 0) throw Error("SeededRng::uniform_index: empty range");
  // Mask rejection keeps the draw unbiased and reproducible.
  std::uint64_t mask = n - 1;
  mask |= mask >> 1; mask |= mask >> 2; mask |= mask >> 4;
  mask |= mask >> 8; mask |= mask >> 16; mask |= mask >> 32;
  std::uint64_t v;
  do { v = next_u64() & mask; } while (v >= n);
  return v;
}

double SeededRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * kPi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

VecX SeededRng::normal_vector(Eigen::Index n) {
  VecX v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
  return v;
}

SeededRng SeededRng::child(std::uint64_t stream) const {
  return SeededRng(splitmix64(seed_ ^ splitmix64(stream + 1)));
}

namespace {

void check_finite(const VecX& x, double t) {
  if (!x.allFinite()) throw NonFiniteState(time_msg("non-finite state", t));
}

// One classic RK4 step of size h from (t, x), writing into x_out.
void rk4_step(const OdeField& f, double t, const VecX& x, double h, VecX& x_out,
              VecX& k1, VecX& k2, VecX& k3, VecX& k4, VecX& tmp) {
  f(t, x, k1);
  tmp = x + (0.5 * h) * k1;
  f(t + 0.5 * h, tmp, k2);
  tmp = x + (0.5 * h) * k2;
  f(t + 0.5 * h, tmp, k3);
  tmp = x + h * k3;
  f(t + h, tmp, k4);
  x_out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Dormand-Prince 5(4) coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                 e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                 e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

// Advance adaptively from (t, x) to t_end; x is updated in place.
void rk45_span(const OdeField& f, double& t, VecX& x, double t_end, const IntegrateOptions& opts) {
  const Eigen::Index n = x.size();
  VecX k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), x5(n), err(n);
  double h = t_end - t;
  while (t < t_end) {
    h = std::min(h, t_end - t);
    f(t, x, k1);
    tmp = x + h * (a21 * k1);
    f(t + c2 * h, tmp, k2);
    tmp = x + h * (a31 * k1 + a32 * k2);
    f(t + c3 * h, tmp, k3);
    tmp = x + h * (a41 * k1 + a42 * k2 + a43 * k3);
    f(t + c4 * h, tmp, k4);
    tmp = x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(t + c5 * h, tmp, k5);
    tmp = x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(t + h, tmp, k6);
    x5 = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    f(t + h, x5, k7);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    if (!x5.allFinite() || !err.allFinite()) {
      // Overflowing trial stages just mean the step was far too long.
      h *= 0.2;
      if (!(h > 0.0) || t + h == t) throw NonFiniteState(time_msg("step underflow", t));
      continue;
    }
    double ratio = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double scale = opts.abs_tol + opts.rel_tol * std::max(std::abs(x[i]), std::abs(x5[i]));
      ratio = std::max(ratio, std::abs(err[i]) / scale);
    }
    if (ratio <= 1.0) {
      t += h;
      x = x5;
    }
    const double grow = (ratio > 0.0) ? 0.9 * std::pow(ratio, -0.2) : 5.0;
    h *= std::clamp(grow, 0.2, 5.0);
    if (!(h > 0.0) || t + h == t) throw NonFiniteState(time_msg("step underflow", t));
  }
}

}  // namespace

Trajectory integrate(const OdeField& field, const VecX& x0, const TimeGrid& grid,
                     IntegrateMethod method, const IntegrateOptions& opts) {
  const Eigen::Index n = x0.size();
  MatX values(n, grid.size());
  values.col(0) = x0;
  check_finite(x0, grid.t0());
  if (method == IntegrateMethod::Rk4) {
    VecX x = x0, xn(n), k1(n), k2(n), k3(n), k4(n), tmp(n);
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
      const double t = grid.node(k);
      const double h = grid.node(k + 1) - t;
      rk4_step(field, t, x, h, xn, k1, k2, k3, k4, tmp);
      check_finite(xn, grid.node(k + 1));
      x = xn;
      values.col(k + 1) = x;
    }
  } else {
    VecX x = x0;
    double t = grid.t0();
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
      rk45_span(field, t, x, grid.node(k + 1), opts);
      check_finite(x, t);
      values.col(k + 1) = x;
    }
  }
  return Trajectory(grid, std::move(values));
}

std::vector<VecX> latin_hypercube(int n, const IntervalBox& box, SeededRng& rng) {
  if (n < 1) throw Error("latin_hypercube: need n >= 1");
  const Eigen::Index d = box.dim();
  std::vector<VecX> samples(static_cast<std::size_t>(n), VecX(d));
  std::vector<std::uint64_t> perm(static_cast<std::size_t>(n));
  for (Eigen::Index axis = 0; axis < d; ++axis) {
    const double lo = box.lower()[axis], wid = box.upper()[axis] - box.lower()[axis];
    if (wid == 0.0) {
      for (auto& s : samples) s[axis] = lo;
      continue;
    }
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = perm.size() - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      // Stratum midpoint plus jitter; uniform01 is open so strata never touch.
      const double pos = (double(perm[i]) + rng.uniform01()) / double(n);
      samples[i][axis] = lo + pos * wid;
    }
  }
  return samples;
}

namespace {

// Solve the equality-constrained weighted min-norm subproblem for the free
// variables, clamped ones held at their bounds. Returns false when the free
// block cannot meet the equalities.
bool solve_free(const VecX& w2, const MatX& a, const VecX& b, const std::vector<int>& state,
                const VecX& fixed, VecX& xi, VecX& nu) {
  const Eigen::Index n = w2.size(), m = a.rows();
  std::vector<Eigen::Index> free_idx;
  for (Eigen::Index i = 0; i < n; ++i)
    if (state[static_cast<std::size_t>(i)] == 0) free_idx.push_back(i);
  VecX rhs = b;
  for (Eigen::Index i = 0; i < n; ++i)
    if (state[static_cast<std::size_t>(i)] != 0) rhs -= a.col(i) * fixed[i];
  const auto nf = static_cast<Eigen::Index>(free_idx.size());
  xi = fixed;
  if (nf == 0) return rhs.lpNorm<Eigen::Infinity>() <= 1e-8;
  MatX af(m, nf);
  for (Eigen::Index j = 0; j < nf; ++j) af.col(j) = a.col(free_idx[static_cast<std::size_t>(j)]);
  MatX gram(m, m);
  gram.setZero();
  for (Eigen::Index j = 0; j < nf; ++j)
    gram += af.col(j) * af.col(j).transpose() / w2[free_idx[static_cast<std::size_t>(j)]];
  Eigen::FullPivLU<MatX> lu(gram);
  if (!lu.isInvertible()) {
    // Rank-deficient: fall back to least squares and accept only exact fits.
    nu = gram.completeOrthogonalDecomposition().solve(rhs);
  } else {
    nu = lu.solve(rhs);
  }
  for (Eigen::Index j = 0; j < nf; ++j) {
    const Eigen::Index i = free_idx[static_cast<std::size_t>(j)];
    xi[i] = af.col(j).dot(nu) / w2[i];
  }
  return (a * xi - b).lpNorm<Eigen::Infinity>() <= 1e-8 * std::max(1.0, b.lpNorm<Eigen::Infinity>());
}

}  // namespace

QpSolution solve_allocation_qp_full(const VecX& w, const MatX& a_eq, const VecX& b_eq,
                                    const IntervalBox& box) {
  const Eigen::Index n = w.size(), m = a_eq.rows();
  if (a_eq.cols() != n || b_eq.size() != m || box.dim() != n)
    throw Error("solve_allocation_qp: dimension mismatch");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(w[i] > 0.0)) throw Error("solve_allocation_qp: weights must be positive");
  const VecX w2 = w.cwiseProduct(w);
  const VecX& lo = box.lower();
  const VecX& hi = box.upper();

  // 0 free, -1 clamped at lower, +1 clamped at upper.
  std::vector<int> state(static_cast<std::size_t>(n), 0);
  VecX fixed = VecX::Zero(n), xi(n), nu(m);
  const double feas_tol = 1e-10;

  auto finish = [&](int iters) {
    QpSolution sol;
    sol.xi = xi;
    sol.eq_multipliers = nu;
    sol.box_multipliers = VecX::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i)
      if (state[static_cast<std::size_t>(i)] != 0)
        sol.box_multipliers[i] = w2[i] * xi[i] - a_eq.col(i).dot(nu);
    sol.iterations = iters;
    return sol;
  };

  const int max_iter = 100;
  for (int iter = 1; iter <= max_iter; ++iter) {
    if (!solve_free(w2, a_eq, b_eq, state, fixed, xi, nu)) break;
    // Primal step: clamp the worst box violation among free variables.
    Eigen::Index worst = -1;
    double worst_v = feas_tol;
    int worst_side = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (state[static_cast<std::size_t>(i)] != 0) continue;
      if (lo[i] - xi[i] > worst_v) { worst_v = lo[i] - xi[i]; worst = i; worst_side = -1; }
      if (xi[i] - hi[i] > worst_v) { worst_v = xi[i] - hi[i]; worst = i; worst_side = +1; }
    }
    if (worst >= 0) {
      state[static_cast<std::size_t>(worst)] = worst_side;
      fixed[worst] = worst_side < 0 ? lo[worst] : hi[worst];
      continue;
    }
    // Dual step: release the clamped variable with the worst-signed multiplier.
    Eigen::Index release = -1;
    double release_v = 1e-10;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int s = state[static_cast<std::size_t>(i)];
      if (s == 0) continue;
      const double lambda = w2[i] * xi[i] - a_eq.col(i).dot(nu);
      // Lower-bound multiplier must be >= 0, upper-bound must be <= 0.
      const double bad = s < 0 ? -lambda : lambda;
      if (bad > release_v) { release_v = bad; release = i; }
    }
    if (release < 0) return finish(iter);
    state[static_cast<std::size_t>(release)] = 0;
  }

  // Active-set stalled or the free block went rank deficient. Enumerate every
  // clamp pattern (3^n, n is small here) before giving up.
  double best_cost = std::numeric_limits<double>::infinity();
  QpSolution best;
  std::vector<int> pattern(static_cast<std::size_t>(n), 0);
  const auto total = static_cast<std::uint64_t>(std::pow(3.0, double(n)) + 0.5);
  for (std::uint64_t code = 0; code < total; ++code) {
    std::uint64_t c = code;
    for (Eigen::Index i = 0; i < n; ++i) {
      pattern[static_cast<std::size_t>(i)] = int(c % 3) - 1;
      c /= 3;
    }
    VecX fx = VecX::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int s = pattern[static_cast<std::size_t>(i)];
      if (s != 0) fx[i] = s < 0 ? lo[i] : hi[i];
    }
    VecX cand(n), cnu(m);
    if (!solve_free(w2, a_eq, b_eq, pattern, fx, cand, cnu)) continue;
    if (!box.contains(cand, 1e-9)) continue;
    const double cost = 0.5 * (w.cwiseProduct(cand)).squaredNorm();
    if (cost < best_cost - 1e-12) {
      best_cost = cost;
      state = pattern;
      xi = cand;
      nu = cnu;
      best = finish(max_iter);
    }
  }
  if (!std::isfinite(best_cost))
    throw Infeasible("solve_allocation_qp: equality constraints unreachable inside the box");
  return best;
}

VecX solve_allocation_qp(const VecX& w, const MatX& a_eq, const VecX& b_eq, const IntervalBox& box) {
  return solve_allocation_qp_full(w, a_eq, b_eq, box).xi;
}

MatX fd_jacobian(const std::function<void(const VecX&, VecX&)>& f, const VecX& v,
                 Eigen::Index out_dim, double rel, double floor) {
  MatX jac(out_dim, v.size());
  VecX vp = v, fp(out_dim), fm(out_dim);
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    const double h = std::max(rel * std::abs(v[j]), floor);
    vp[j] = v[j] + h;
    f(vp, fp);
    vp[j] = v[j] - h;
    f(vp, fm);
    vp[j] = v[j];
    jac.col(j) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& body) {
  const int nthreads = std::min<int>(std::max(1, workers), int(count));
  if (nthreads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nthreads));
  for (int i = 0; i < nthreads; ++i) pool.emplace_back(run);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace sts::numerics
