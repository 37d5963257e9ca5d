#pragma once

#include <optional>
#include <span>
#include <vector>

#include "remeanflow/rng.hpp"
#include "remeanflow/tensor.hpp"

namespace rmf {

// Weighted mixture of isotropic Gaussians with a shared per-component scale.
struct GaussianMixture {
  std::vector<double> weights;             // nonnegative, sum to 1
  std::vector<std::vector<double>> means;  // one point per component
  double scale = 1.0;                      // isotropic std-dev

  std::size_t dim() const;
  std::size_t num_components() const { return weights.size(); }
  void validate() const;

  static GaussianMixture standard_normal(std::size_t dim);
};

// Draws n points; if `components` is non-null it receives the chosen
// component index per draw.
Tensor sample_mixture(const GaussianMixture& gm, std::size_t n, Rng& rng,
                      std::vector<int>* components = nullptr);

// Log mixture density via log-sum-exp.
double log_density(const GaussianMixture& gm, std::span<const double> point);

// Closed-form marginal velocity E[z - x | z_t] for x ~ N(mu, sigma^2 I),
// z ~ N(0, I) independent, z_t = (1-t)x + tz. Throws when the conditional
// variance denominator degenerates.
std::vector<double> gaussian_velocity_oracle(std::span<const double> mu,
                                             double sigma, double t,
                                             std::span<const double> z_t);

// Two-mixture transport task. The data distribution is `target`; the noise
// end is the balanced `source` mixture when prior_is_source, else N(0, I).
struct ToyTask {
  GaussianMixture source;
  GaussianMixture target;
  bool prior_is_source = true;
  std::vector<int> class_labels;  // optional, one per target component

  std::size_t dim() const { return target.dim(); }
  GaussianMixture prior() const;
  std::size_t num_classes() const;
  void validate() const;
};

// Balanced source at (-8, +-2), imbalanced target at (8, +-2) with weights
// (0.4 upper, 0.6 lower), unit scale. The left/right gap is wide enough that
// samples stranded mid-transport register as outliers, while the vertical
// mode split is small enough that cross-mode couplings are not much longer
// than straight ones, so distance truncation trims noise instead of
// removing the mass that must switch modes.
ToyTask default_toy_task();

}  // namespace rmf
