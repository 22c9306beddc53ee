#include "sts/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sts::tuner {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate(const DfoConfig& c) {
  if (c.elite <= 0 || c.elite > c.directions) throw Error("elite count must be in (0, B]");
  if (!(c.sigma > 0.0)) throw Error("smoothing radius must be positive");
  if (!(c.step > 0.0)) throw Error("step size must be positive");
  if (!c.objective) throw Error("objective not set");
}

double finite_or_inf(double v) { return std::isfinite(v) ? v : kInf; }

}  // namespace

VecX two_point_gradient(const Objective& g, const VecX& eta, const VecX& xi, double sigma) {
  const double diff = g(eta + sigma * xi) - g(eta - sigma * xi);
  return (diff / (2.0 * sigma)) * xi;
}

VecX sgd_step(const VecX& eta, const DfoConfig& config, numerics::SeededRng& rng) {
  validate(config);
  const VecX xi = rng.normal_vector(eta.size());
  return eta - config.step * two_point_gradient(config.objective, eta, xi, config.sigma);
}

VecX ars_step(const VecX& eta, const DfoConfig& config, numerics::SeededRng& rng,
              StepReport* report) {
  validate(config);
  const Eigen::Index n = eta.size();
  const int b = config.directions;

  MatX xi(n, b);
  for (int i = 0; i < b; ++i) xi.col(i) = rng.normal_vector(n);

  // Probes are indexed by draw, so a parallel schedule cannot reorder the
  // update.
  std::vector<double> plus(b), minus(b);
  numerics::parallel_for(static_cast<std::size_t>(2 * b), config.workers, [&](std::size_t k) {
    const int i = static_cast<int>(k / 2);
    const double side = (k % 2 == 0) ? 1.0 : -1.0;
    const double cost = finite_or_inf(config.objective(eta + side * config.sigma * xi.col(i)));
    ((k % 2 == 0) ? plus : minus)[i] = cost;
  });

  bool any_finite = false;
  for (int i = 0; i < b; ++i)
    if (std::isfinite(plus[i]) || std::isfinite(minus[i])) any_finite = true;
  if (!any_finite) throw AllInfinite("every probe in the batch aborted");

  std::vector<int> order(b);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int c) {
    const double ka = std::min(plus[a], minus[a]);
    const double kc = std::min(plus[c], minus[c]);
    return ka != kc ? ka < kc : a < c;
  });

  std::vector<int> kept;
  kept.reserve(config.elite);
  for (int r = 0; r < config.elite; ++r) {
    const int i = order[r];
    if (std::isfinite(plus[i]) && std::isfinite(minus[i])) kept.push_back(i);
  }

  VecX elite(2 * static_cast<Eigen::Index>(kept.size()));
  for (std::size_t r = 0; r < kept.size(); ++r) {
    elite[2 * r] = plus[kept[r]];
    elite[2 * r + 1] = minus[kept[r]];
  }
  const double mean = elite.size() > 0 ? elite.mean() : 0.0;
  const double dev =
      elite.size() > 0 ? std::sqrt((elite.array() - mean).square().sum() / elite.size()) : 0.0;

  VecX next = eta;
  const bool skipped = kept.empty() || dev == 0.0;
  if (!skipped) {
    VecX dir = VecX::Zero(n);
    for (int i : kept) dir += ((plus[i] - minus[i]) / (2.0 * dev)) * xi.col(i);
    next -= (config.step / static_cast<double>(kept.size())) * dir;
  }

  if (report) {
    report->probe_costs.resize(2 * b);
    for (int i = 0; i < b; ++i) {
      report->probe_costs[2 * i] = plus[i];
      report->probe_costs[2 * i + 1] = minus[i];
    }
    report->elite_costs = elite;
    report->deviation = dev;
    report->used = static_cast<int>(kept.size());
    report->skipped = skipped;
    double best = kInf;
    int best_i = 0;
    double best_side = 1.0;
    for (int i = 0; i < b; ++i) {
      if (plus[i] < best) { best = plus[i]; best_i = i; best_side = 1.0; }
      if (minus[i] < best) { best = minus[i]; best_i = i; best_side = -1.0; }
    }
    report->best_probe = eta + best_side * config.sigma * xi.col(best_i);
    report->best_probe_cost = best;
  }
  return next;
}

VecX pack_gains(const ilc::IlcGains& gains) {
  VecX eta(36);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 6; ++c) {
      eta[r * 6 + c] = gains.feedback(r, c);
      eta[18 + r * 6 + c] = gains.feedforward(r, c);
    }
  return eta;
}

ilc::IlcGains unpack_gains(const VecX& eta) {
  if (eta.size() != 36) throw Error("gain vector must have 36 entries");
  ilc::IlcGains g;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 6; ++c) {
      g.feedback(r, c) = eta[r * 6 + c];
      g.feedforward(r, c) = eta[18 + r * 6 + c];
    }
  return g;
}

Objective training_objective(const planner::ReferenceBundle& ref,
                             const lqr::GainSchedule& lqr_gains,
                             const dynamics::ParamVector& p_true, int iterations, int substeps) {
  return [&ref, &lqr_gains, p_true, iterations, substeps](const VecX& eta) {
    ilc::TrainingConfig cfg;
    cfg.gains = unpack_gains(eta);
    cfg.p_true = p_true;
    cfg.iterations = iterations;
    cfg.substeps = substeps;
    return ilc::run_training(ref, lqr_gains, cfg).back().cost;
  };
}

TuneResult tune_ilc_gains(const planner::ReferenceBundle& ref,
                          const lqr::GainSchedule& lqr_gains,
                          const dynamics::ParamVector& p_true, const ilc::IlcGains& init,
                          DfoConfig config) {
  if (!config.objective) config.objective = training_objective(ref, lqr_gains, p_true);
  validate(config);

  numerics::SeededRng rng(config.seed);
  VecX eta = pack_gains(init);
  VecX best_eta = eta;
  double best = finite_or_inf(config.objective(eta));

  DfoTrace trace;
  trace.best_cost.reserve(config.iterations);
  trace.iterate.reserve(config.iterations);
  trace.elite_costs.reserve(config.iterations);

  for (int k = 0; k < config.iterations; ++k) {
    StepReport rep;
    eta = ars_step(eta, config, rng, &rep);
    if (rep.best_probe_cost < best) {
      best = rep.best_probe_cost;
      best_eta = rep.best_probe;
    }
    trace.best_cost.push_back(best);
    trace.iterate.push_back(eta);
    trace.elite_costs.push_back(rep.elite_costs);
  }

  return {unpack_gains(best_eta), best, std::move(trace)};
}

}  // namespace sts::tuner
