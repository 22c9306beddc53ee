#include "sts/presets.hpp"

namespace sts::presets {

dynamics::ParamVector nominal_params() {
  Vec12 v;
  v << 9.68, 12.59, 44.57,      // masses
      1.16, 0.52, 2.56,         // inertias
      0.53, 0.41, 0.52,         // lengths
      0.27, 0.21, 0.26;         // com offsets
  return dynamics::ParamVector::from_vector(v);
}

Vec12 param_lower() {
  Vec12 v;
  v << 9.2, 11.2, 42.3, 1.10, 0.49, 2.40, 0.52, 0.39, 0.51, 0.23, 0.17, 0.24;
  return v;
}

Vec12 param_upper() {
  Vec12 v;
  v << 10.2, 13.2, 46.8, 1.21, 0.54, 2.65, 0.54, 0.42, 0.53, 0.30, 0.23, 0.28;
  return v;
}

numerics::IntervalBox param_box() { return numerics::IntervalBox(param_lower(), param_upper()); }

Vec6 initial_state() {
  Vec6 x;
  x << deg2rad(90.0), deg2rad(-90.0), deg2rad(90.0), 0.0, 0.0, 0.0;
  return x;
}

Vec4 input_lower() {
  Vec4 v;
  v << -200.0, -175.0, -40.0, 0.0;
  return v;
}

Vec4 input_upper() {
  Vec4 v;
  v << 200.0, 50.0, 40.0, 650.0;
  return v;
}

Vec4 input_weight() {
  Vec4 v;
  v << 1.0, 1.0, 10.0, 1.0;
  return v;
}

Vec6 state_lower() {
  Vec6 v;
  v << deg2rad(80.0), deg2rad(-120.0), deg2rad(0.0), deg2rad(-20.0), deg2rad(-5.0), deg2rad(-70.0);
  return v;
}

Vec6 state_upper() {
  Vec6 v;
  v << deg2rad(120.0), deg2rad(0.0), deg2rad(130.0), deg2rad(10.0), deg2rad(60.0), deg2rad(20.0);
  return v;
}

VecX lqr_q_star() {
  VecX v(6);
  v << 80.0, 95.0, 95.0, 68.0, 90.0, 83.0;
  return v;
}

VecX lqr_r_star() {
  VecX v(4);
  v << 1.0e-3, 2.0e-4, 6.0e-4, 4.4e-3;
  return v;
}

VecX lqr_s_star() {
  VecX v(6);
  v << 30.0, 37.0, 19.0, 29.0, 92.0, 82.0;
  return v;
}

VecX baseline_q() { return VecX::Constant(6, 50.0); }
VecX baseline_r() { return VecX::Constant(4, 5.0e-3); }
VecX baseline_s() { return VecX::Constant(6, 50.0); }

std::vector<double> evaluation_instants() { return {0.0, 0.875, 1.75, 2.625, 3.5}; }

Mat36 ilc_feedback_star() {
  Mat36 k;
  k << -100.6, -53.26, 71.59, -123.9, -208.5, 66.02,
      57.98, -21.06, -47.92, -24.67, 166.9, -31.92,
      28.86, 20.20, 139.9, 46.62, -29.75, 123.5;
  return k;
}

Mat36 ilc_feedforward_star() {
  Mat36 l;
  l << -0.6381, 2.376, 46.31, -2.514, -5.255, -28.89,
      -2.948, -29.34, -25.24, 2.851, -3.559, 24.48,
      -73.09, -58.25, 114.1, 19.82, 13.09, 126.9;
  return l;
}

Vec12 ilc_param_lower() {
  Vec12 v = param_lower();
  const Vec12 hat = nominal_params().to_vector();
  for (int i = 6; i < 9; ++i) v[i] = hat[i] - 1e-3;
  return v;
}

Vec12 ilc_param_upper() {
  Vec12 v = param_upper();
  const Vec12 hat = nominal_params().to_vector();
  for (int i = 6; i < 9; ++i) v[i] = hat[i] + 1e-3;
  return v;
}

}  // namespace sts::presets
