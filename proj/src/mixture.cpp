#include "remeanflow/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "remeanflow/util.hpp"

namespace rmf {

std::size_t GaussianMixture::dim() const {
  if (means.empty()) fail("GaussianMixture: no components");
  return means[0].size();
}

void GaussianMixture::validate() const {
  if (weights.empty() || weights.size() != means.size())
    fail("GaussianMixture: weight/mean count mismatch");
  if (scale <= 0.0) fail("GaussianMixture: scale must be positive");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) fail("GaussianMixture: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12)
    fail("GaussianMixture: weights must sum to 1");
  std::size_t d = means[0].size();
  for (const auto& m : means)
    if (m.size() != d) fail("GaussianMixture: inconsistent mean dimensions");
}

GaussianMixture GaussianMixture::standard_normal(std::size_t dim) {
  GaussianMixture gm;
  gm.weights = {1.0};
  gm.means = {std::vector<double>(dim, 0.0)};
  gm.scale = 1.0;
  return gm;
}

Tensor sample_mixture(const GaussianMixture& gm, std::size_t n, Rng& rng,
                      std::vector<int>* components) {
  gm.validate();
  if (n == 0) fail("sample_mixture: n must be positive");
  std::size_t d = gm.dim();
  Tensor out = Tensor::zeros({n, d});
  if (components) components->resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = rng.categorical(gm.weights);
    if (components) (*components)[i] = static_cast<int>(k);
    for (std::size_t j = 0; j < d; ++j)
      out.at(i, j) = gm.means[k][j] + gm.scale * rng.normal();
  }
  return out;
}

double log_density(const GaussianMixture& gm, std::span<const double> point) {
  gm.validate();
  std::size_t d = gm.dim();
  if (point.size() != d) fail("log_density: point dimension mismatch");
  double var = gm.scale * gm.scale;
  double log_norm = -0.5 * static_cast<double>(d) *
                    std::log(2.0 * std::numbers::pi * var);
  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(gm.num_components());
  for (std::size_t k = 0; k < gm.num_components(); ++k) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double diff = point[j] - gm.means[k][j];
      sq += diff * diff;
    }
    double t = (gm.weights[k] > 0.0 ? std::log(gm.weights[k])
                                    : -std::numeric_limits<double>::infinity()) +
               log_norm - 0.5 * sq / var;
    terms[k] = t;
    max_term = std::max(max_term, t);
  }
  if (!std::isfinite(max_term)) return max_term;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - max_term);
  return max_term + std::log(acc);
}

std::vector<double> gaussian_velocity_oracle(std::span<const double> mu,
                                             double sigma, double t,
                                             std::span<const double> z_t) {
  if (mu.size() != z_t.size())
    fail("gaussian_velocity_oracle: dimension mismatch");
  if (t < 0.0 || t > 1.0) fail("gaussian_velocity_oracle: t outside [0,1]");
  double s2 = sigma * sigma;
  double denom = (1.0 - t) * (1.0 - t) * s2 + t * t;
  if (denom < 1e-12)
    fail("gaussian_velocity_oracle: degenerate conditional variance");
  double coeff = (t - (1.0 - t) * s2) / denom;
  std::vector<double> out(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j)
    out[j] = -mu[j] + coeff * (z_t[j] - (1.0 - t) * mu[j]);
  return out;
}

GaussianMixture ToyTask::prior() const {
  return prior_is_source ? source : GaussianMixture::standard_normal(dim());
}

std::size_t ToyTask::num_classes() const {
  if (class_labels.empty()) return 0;
  std::set<int> distinct(class_labels.begin(), class_labels.end());
  return distinct.size();
}

void ToyTask::validate() const {
  source.validate();
  target.validate();
  if (source.dim() != target.dim())
    fail("ToyTask: source/target dimension mismatch");
  if (!class_labels.empty() &&
      class_labels.size() != target.num_components())
    fail("ToyTask: need one class label per target component");
}

ToyTask default_toy_task() {
  ToyTask task;
  task.source.weights = {0.5, 0.5};
  task.source.means = {{-8.0, 2.0}, {-8.0, -2.0}};
  task.source.scale = 1.0;
  task.target.weights = {0.4, 0.6};
  task.target.means = {{8.0, 2.0}, {8.0, -2.0}};
  task.target.scale = 1.0;
  task.prior_is_source = true;
  return task;
}

}  // namespace rmf
