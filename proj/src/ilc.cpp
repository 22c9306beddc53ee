#include "sts/ilc.hpp"

#include <cmath>
#include <limits>

namespace sts::ilc {

using numerics::IntervalBox;
using numerics::TimeGrid;
using numerics::Trajectory;

double hip_torque(double t, const Vec6& x, const planner::ReferenceBundle& ref,
                  const lqr::GainSchedule& lqr_gains, const IntervalBox& u_box) {
  const Vec6 err = x - Vec6(ref.state.value(t));
  const VecX u_fb = ref.input.value(t) - lqr_gains.gain.value(t) * err;
  return std::min(u_box.upper()[0], std::max(u_box.lower()[0], u_fb[0]));
}

Trajectory init_mu(const planner::ReferenceBundle& ref) {
  const TimeGrid grid = ref.input.grid();
  const auto n = grid.size();
  const Vec3 head = ref.input.node(0).tail<3>();
  const Vec3 tail = ref.input.node(n - 1).tail<3>();
  MatX values(3, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double s = (grid.node(k) - grid.t0()) / (grid.tf() - grid.t0());
    values.col(k) = head + s * (tail - head);
  }
  return Trajectory(grid, std::move(values));
}

IlcSession::IlcSession(const IlcGains& gains, const planner::ReferenceBundle& ref,
                       const lqr::GainSchedule& lqr_gains, const dynamics::ParamVector& p_true,
                       RecallPolicy recall)
    : state_box(presets::state_lower(), presets::state_upper()),
      input_box(presets::input_lower(), presets::input_upper()),
      gains_(gains),
      ref_(ref),
      p_true_(p_true),
      recall_(recall),
      rng_(recall.seed),
      grid_(ref.state.grid()),
      x0_(ref.state.node(0)) {
  const auto n = grid_.size();
  MatX row(6, n), hip(1, n), ups(6, n);
  for (std::size_t k = 0; k < n; ++k) {
    row.col(k) = lqr_gains.gain.value(grid_.node(k)).row(0).transpose();
    hip(0, k) = ref.input.node(k)[0];
    ups.col(k) = dynamics::user_output(ref.state.node(k), ref.params);
  }
  // The Riccati terminal transient is far thinner than the storage step, so
  // interpolating into the final node would smear a microsecond-scale gain
  // spike across the whole last interval. Hold the interior value instead.
  if (n >= 2) row.col(n - 1) = row.col(n - 2);
  gain_row_ = Trajectory(grid_, std::move(row));
  hat_hip_ = Trajectory(grid_, std::move(hip));
  hat_ups_ = Trajectory(grid_, std::move(ups));
  mu_hat_t0_ = ref.input.node(0).tail<3>();
  mu_hat_tf_ = ref.input.node(n - 1).tail<3>();

  mu_prev_ = init_mu(ref);
  ups_prev_ = hat_ups_;
  mu_prev_end_ = mu_prev_.node(n - 1);
  t_s_prev_ = grid_.tf();

  buf3_.resize(3);
  buf6a_.resize(6);
  buf6b_.resize(6);
  bufg_.resize(6);
  bufh_.resize(1);
}

void IlcSession::override_initial_input(const Trajectory& mu0) {
  std::size_t keep = grid_.size();
  while (keep > 1 && grid_.node(keep - 1) > mu0.grid().tf() + 1e-12) --keep;
  if (keep < 2) throw Error("warm start covers less than one grid interval");
  MatX values(3, keep);
  for (std::size_t k = 0; k < keep; ++k) values.col(k) = mu0.value(grid_.node(k));
  mu_prev_ = Trajectory(grid_.truncated(keep), std::move(values));
  mu_prev_end_ = mu_prev_.node(keep - 1);
  t_s_prev_ = grid_.node(keep - 1);
}

Vec3 IlcSession::saturated_mu(const Vec3& raw) const {
  return raw.cwiseMax(input_box.lower().tail<3>()).cwiseMin(input_box.upper().tail<3>());
}

Vec3 IlcSession::mu_update(double t, const Vec6& ups_current) const {
  const double tf = grid_.tf();
  if (t >= t_s_prev_) {
    if (t_s_prev_ >= tf) {
      if (t_s_prev_ > tf)
        throw DegenerateExtrapolation("previous stop instant lies past the horizon");
      // Completed previous trial: the window is the single endpoint.
      return saturated_mu(mu_hat_tf_);
    }
    const Vec3 alpha = (mu_hat_tf_ - mu_prev_end_) / (tf - t_s_prev_);
    return saturated_mu(alpha * t + (mu_hat_tf_ - alpha * tf));
  }
  mu_prev_.value_into(t, buf3_);
  ups_prev_.value_into(t, buf6a_);
  hat_ups_.value_into(t, buf6b_);
  const Vec3 raw = gamma_ * Vec3(buf3_) +
                   gains_.feedforward * (buf6b_ - buf6a_) +
                   gains_.feedback * (Vec6(buf6b_) - ups_current);
  return saturated_mu(raw);
}

double IlcSession::hip_now(double t, const Vec6& x) const {
  ref_.state.value_into(t, buf6a_);
  gain_row_.value_into(t, bufg_);
  hat_hip_.value_into(t, bufh_);
  const double raw = bufh_[0] - bufg_.dot(x - Vec6(buf6a_));
  return std::min(input_box.upper()[0], std::max(input_box.lower()[0], raw));
}

Vec6 IlcSession::closed_loop_field(double t, const Vec6& x) const {
  Vec4 u;
  u[0] = hip_now(t, x);
  u.tail<3>() = mu_update(t, dynamics::user_output(x, p_true_));
  return dynamics::state_derivative(x, p_true_, u);
}

IterationResult IlcSession::run_iteration() {
  ++iteration_;
  if (recall_.mode == RecallMode::Perturbed) {
    const double scale = std::pow(recall_.decay, iteration_ - 1);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        gamma_(r, c) = (r == c ? 1.0 : 0.0) +
                       scale * rng_.uniform(-recall_.amplitude, recall_.amplitude);
  } else {
    gamma_ = Mat3::Identity();
  }

  const auto n = grid_.size();
  const Vec6 sb_lo = state_box.lower();
  const Vec6 sb_hi = state_box.upper();
  const auto inside = [&](const Vec6& x) {
    return (x.array() >= sb_lo.array()).all() && (x.array() <= sb_hi.array()).all();
  };

  MatX xs(6, n), ys(6, n), ms(3, n), taus(1, n);
  const auto record = [&](std::size_t k, const Vec6& x) {
    const double t = grid_.node(k);
    const Vec6 ups = dynamics::user_output(x, p_true_);
    xs.col(k) = x;
    ys.col(k) = ups;
    ms.col(k) = mu_update(t, ups);
    taus(0, k) = hip_now(t, x);
  };

  Vec6 x = x0_;
  record(0, x);
  std::size_t last = n - 1;
  bool aborted = !inside(x);
  if (aborted) last = 0;

  const int sub = std::max(1, substeps);
  for (std::size_t k = 0; !aborted && k + 1 < n; ++k) {
    const double h = (grid_.node(k + 1) - grid_.node(k)) / sub;
    Vec6 xn = x;
    try {
      for (int s = 0; s < sub; ++s) {
        const double t = grid_.node(k) + s * h;
        const Vec6 k1 = closed_loop_field(t, xn);
        const Vec6 k2 = closed_loop_field(t + 0.5 * h, xn + 0.5 * h * k1);
        const Vec6 k3 = closed_loop_field(t + 0.5 * h, xn + 0.5 * h * k2);
        const Vec6 k4 = closed_loop_field(t + h, xn + h * k3);
        xn += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
    } catch (const Error&) {
      xn.setConstant(std::numeric_limits<double>::quiet_NaN());
    }
    if (!xn.allFinite() || !inside(xn)) {
      aborted = true;
      last = k;
      break;
    }
    x = xn;
    record(k + 1, x);
  }

  IterationResult res;
  res.aborted = aborted;
  res.t_s = grid_.node(last);
  if (last > 0) {
    // A trial stopped at the very first node has no representable segment;
    // its result keeps empty trajectories and only the scalars carry data.
    const TimeGrid span = grid_.truncated(last + 1);
    res.state = Trajectory(span, xs.leftCols(last + 1));
    res.output = Trajectory(span, ys.leftCols(last + 1));
    res.mu = Trajectory(span, ms.leftCols(last + 1));
    res.hip = Trajectory(span, taus.leftCols(last + 1));
  }

  if (aborted) {
    res.cost = std::numeric_limits<double>::infinity();
  } else {
    double j = 0.0;
    Vec3 rate = Vec3::Zero();
    for (std::size_t k = 0; k < n; ++k) {
      if (k + 1 < n) rate = (ms.col(k + 1) - ms.col(k)) / (grid_.node(k + 1) - grid_.node(k));
      j += (hat_ups_.node(k) - ys.col(k)).norm() + presets::kRateWeight * rate.norm();
    }
    res.cost = j;
  }

  if (last > 0) {
    mu_prev_ = res.mu;
    ups_prev_ = res.output;
  }
  mu_prev_end_ = ms.col(last);
  t_s_prev_ = res.t_s;
  return res;
}

std::vector<IterationResult> run_training(const planner::ReferenceBundle& ref,
                                          const lqr::GainSchedule& lqr_gains,
                                          const TrainingConfig& cfg) {
  IlcSession session(cfg.gains, ref, lqr_gains, cfg.p_true, cfg.recall);
  session.substeps = cfg.substeps;
  if (cfg.warm_start) session.override_initial_input(*cfg.warm_start);
  std::vector<IterationResult> out;
  out.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int j = 0; j < cfg.iterations; ++j) out.push_back(session.run_iteration());
  return out;
}

}  // namespace sts::ilc
