#pragma once

#include "remeanflow/rng.hpp"

namespace rmf {

// (r, t) sampler: t from the U-shaped density exp(a u) + exp(-a u) on
// [0, 1], interval length |t - r| through a sigmoid-transformed normal,
// and a rewrite rule that sends the high-variance corner (t high, r low)
// to r = 0.
struct TimeSamplerConfig {
  double u_shape_a = 4.0;
  bool u_shape_enabled = true;  // false: t ~ U(0, 1)
  double interval_mean = -0.8;
  double interval_std = 1.0;
  double ratio_r_neq_t = 0.25;
  double avoid_t_hi = 0.95;
  double avoid_r_lo = 0.4;
  bool avoid_enabled = true;

  void validate() const;
};

struct TimePair {
  double r = 0.0;
  double t = 0.0;
  bool r_equals_t = false;  // branch taken, before any rewrite
  bool rewritten = false;   // avoidance rule fired
};

// Guarantees 0 <= r <= t <= 1.
TimePair sample_time_pair(const TimeSamplerConfig& cfg, Rng& rng);

// CDF of the U-shaped density: sinh(a u) / sinh(a).
double u_shape_cdf(double a, double u);

// Inverse CDF: asinh(xi sinh(a)) / a.
double u_shape_inverse_cdf(double a, double xi);

}  // namespace rmf
