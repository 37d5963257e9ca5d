#include "remeanflow/timesampler.hpp"

#include <algorithm>
#include <cmath>

#include "remeanflow/util.hpp"

namespace rmf {

void TimeSamplerConfig::validate() const {
  if (u_shape_a <= 0.0) fail("TimeSamplerConfig: u_shape_a must be > 0");
  if (ratio_r_neq_t < 0.0 || ratio_r_neq_t > 1.0)
    fail("TimeSamplerConfig: ratio_r_neq_t must be in [0, 1]");
  if (interval_std <= 0.0) fail("TimeSamplerConfig: interval_std must be > 0");
}

double u_shape_cdf(double a, double u) {
  return std::sinh(a * u) / std::sinh(a);
}

double u_shape_inverse_cdf(double a, double xi) {
  return std::asinh(xi * std::sinh(a)) / a;
}

TimePair sample_time_pair(const TimeSamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  TimePair out;
  double xi = rng.uniform();
  out.t = cfg.u_shape_enabled ? u_shape_inverse_cdf(cfg.u_shape_a, xi) : xi;
  out.t = std::clamp(out.t, 0.0, 1.0);

  if (rng.uniform() >= cfg.ratio_r_neq_t) {
    out.r = out.t;
    out.r_equals_t = true;
  } else {
    double gap = rng.normal(cfg.interval_mean, cfg.interval_std);
    double delta = 1.0 / (1.0 + std::exp(-gap));
    out.r = std::max(0.0, out.t - delta);
    out.r_equals_t = false;
  }

  if (cfg.avoid_enabled && out.t > cfg.avoid_t_hi && out.r < cfg.avoid_r_lo &&
      out.r != out.t) {
    out.r = 0.0;
    out.rewritten = true;
  }
  return out;
}

}  // namespace rmf
