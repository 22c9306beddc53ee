#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "sts/types.hpp"

namespace sts::numerics {

// Strictly increasing sampling instants. All trajectories in the toolkit live
// on one of these; the common case is a uniform grid, which keeps bracket
// lookup O(1).
class TimeGrid {
 public:
  TimeGrid() = default;
  static TimeGrid uniform(double t0, double tf, double step);
  static TimeGrid from_nodes(std::vector<double> nodes);

  std::size_t size() const { return nodes_.size(); }
  double node(std::size_t i) const { return nodes_[i]; }
  double t0() const { return nodes_.front(); }
  double tf() const { return nodes_.back(); }
  double step() const { return step_; }
  bool is_uniform() const { return uniform_; }
  const std::vector<double>& nodes() const { return nodes_; }

  // Bracket index k and fraction a in [0,1] with t ~ (1-a)*node(k) + a*node(k+1).
  // Throws OutOfDomain outside [t0, tf] (small roundoff slack allowed).
  std::pair<std::size_t, double> locate(double t) const;

  // First count nodes (count >= 1).
  TimeGrid truncated(std::size_t count) const;

 private:
  std::vector<double> nodes_;
  double step_ = 0.0;
  bool uniform_ = false;
};

enum class Interp { Linear, PreviousNode };

// Sampled vector signal over a TimeGrid, one column per node.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(TimeGrid grid, MatX values, Interp policy = Interp::Linear);

  const TimeGrid& grid() const { return grid_; }
  Eigen::Index dim() const { return values_.rows(); }
  std::size_t size() const { return grid_.size(); }
  Interp policy() const { return policy_; }
  const MatX& values() const { return values_; }
  MatX& values() { return values_; }

  Eigen::Ref<const VecX> node(std::size_t i) const { return values_.col(i); }
  VecX value(double t) const;
  void value_into(double t, Eigen::Ref<VecX> out) const;

  Trajectory truncated(std::size_t count) const;

 private:
  TimeGrid grid_;
  MatX values_;
  Interp policy_ = Interp::Linear;
};

// Time-varying matrix stored flattened column-major per node.
struct MatrixSchedule {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Trajectory traj;

  MatrixSchedule() = default;
  MatrixSchedule(Eigen::Index r, Eigen::Index c, Trajectory t)
      : rows(r), cols(c), traj(std::move(t)) {}

  MatX at_node(std::size_t i) const {
    return Eigen::Map<const MatX>(traj.node(i).data(), rows, cols);
  }
  MatX value(double t) const {
    VecX flat = traj.value(t);
    return Eigen::Map<const MatX>(flat.data(), rows, cols);
  }
};

// Axis-aligned box, lower <= upper enforced. A zero-width axis is legal and
// simply pins that coordinate.
class IntervalBox {
 public:
  IntervalBox() = default;
  IntervalBox(VecX lower, VecX upper);

  Eigen::Index dim() const { return lower_.size(); }
  const VecX& lower() const { return lower_; }
  const VecX& upper() const { return upper_; }
  VecX center() const { return 0.5 * (lower_ + upper_); }
  VecX width() const { return upper_ - lower_; }
  double volume() const { return (upper_ - lower_).prod() + 0.0; }
  bool contains(const VecX& x, double tol = 0.0) const;
  VecX clamp(const VecX& x) const;

 private:
  VecX lower_, upper_;
};

// Deterministic random source. The raw mt19937_64 stream is bit-exact per the
// standard; variates are derived from it directly (not via std distributions,
// which are implementation-defined) so identical seeds give identical sample
// lists on any platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  double uniform01();                       // open interval (0,1)
  double uniform(double lo, double hi);
  std::uint64_t uniform_index(std::uint64_t n);  // {0,...,n-1}
  double normal();                          // standard normal, Box-Muller
  VecX normal_vector(Eigen::Index n);

  // Independent child stream; derivation depends only on (seed, stream), so
  // parallel consumers stay reproducible regardless of scheduling.
  SeededRng child(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

enum class IntegrateMethod { Rk4, Rk45 };

struct IntegrateOptions {
  double abs_tol = 1e-9;   // rk45 only
  double rel_tol = 1e-7;   // rk45 only
};

using OdeField = std::function<void(double t, const VecX& x, VecX& dx)>;

// Integrate dx/dt = field(t, x) and sample the solution at every grid node.
// Rk4 takes exactly one step per grid interval; Rk45 substeps adaptively to
// the requested tolerances and lands on each node. Throws NonFiniteState as
// soon as any component stops being finite.
Trajectory integrate(const OdeField& field, const VecX& x0, const TimeGrid& grid,
                     IntegrateMethod method = IntegrateMethod::Rk4,
                     const IntegrateOptions& opts = {});

// n samples, one per stratum per axis: stratum midpoint plus uniform jitter,
// strata shuffled independently per axis. A zero-width axis yields the
// constant value for every sample. Draw order is fixed (axis-major) so the
// result is a pure function of (n, box, rng state).
std::vector<VecX> latin_hypercube(int n, const IntervalBox& box, SeededRng& rng);

struct QpSolution {
  VecX xi;
  VecX eq_multipliers;    // one per equality row
  VecX box_multipliers;   // >= 0 at lower bound, <= 0 stored as signed value
  int iterations = 0;
};

// minimize 1/2 ||diag(w) xi||^2  subject to  a_eq xi = b_eq, xi in box.
// Active-set iteration over the weighted min-norm closed form; ties in
// constraint activation broken by lowest index. Throws Infeasible when no
// point of the box satisfies the equality constraints.
QpSolution solve_allocation_qp_full(const VecX& w, const MatX& a_eq, const VecX& b_eq,
                                    const IntervalBox& box);
VecX solve_allocation_qp(const VecX& w, const MatX& a_eq, const VecX& b_eq,
                         const IntervalBox& box);

// Central-difference Jacobian with per-component step max(rel*|v|, floor).
MatX fd_jacobian(const std::function<void(const VecX&, VecX&)>& f, const VecX& v,
                 Eigen::Index out_dim, double rel = 1e-6, double floor = 1e-8);

// Runs body(0..count-1) on up to `workers` threads. Results must be written
// to per-index slots; scheduling never affects them. Exceptions propagate.
void parallel_for(std::size_t count, int workers,
                  const std::function<void(std::size_t)>& body);

}  // namespace sts::numerics
