#pragma once

#include <span>
#include <string>
#include <vector>

#include "remeanflow/budget.hpp"
#include "remeanflow/coupling.hpp"
#include "remeanflow/meanflow.hpp"
#include "remeanflow/mixture.hpp"

namespace rmf {

// Angle between two vectors in [0, pi]; throws if either norm < 1e-12.
double angular_error(std::span<const double> a, std::span<const double> b);

// Fraction of sample rows whose target log-density falls below `threshold`.
double outlier_rate(const Tensor& samples, const GaussianMixture& target,
                    double log_density_threshold);

// Default threshold: analytic log-density of an isolated component at
// 4 standard deviations from its mean, taken over the best component.
double default_outlier_threshold(const GaussianMixture& target,
                                 double n_sigma = 4.0);

// 2 E|A-B| - E|A-A'| - E|B-B'|. All-pairs; sets larger than `cap` rows are
// first subsampled with the seeded rng.
double energy_distance(const Tensor& a, const Tensor& b,
                       Rng* rng = nullptr, std::size_t cap = 4096);

struct LossHeatmap {
  std::size_t grid_n = 0;
  // Row-major grid over (t, r) cells, r <= t; cells above the diagonal and
  // cells that received no samples have count 0.
  std::vector<double> mean;
  std::vector<double> stdev;
  std::vector<std::uint64_t> count;

  std::size_t cell(std::size_t ti, std::size_t ri) const {
    return ti * grid_n + ri;
  }
};

// Uniform draws over the triangle r <= t, binned; per cell mean/std of the
// per-sample regression error |u_pred - u_tgt|^2.
LossHeatmap loss_heatmap(const MeanFlowModel& model, const CouplingSet& set,
                         std::size_t grid_n, std::size_t n_draws, Rng& rng);

void export_heatmap_csv(const std::string& path, const LossHeatmap& hm);

struct DistanceErrorHistogram {
  std::vector<double> bin_lo, bin_hi;
  std::vector<std::uint64_t> count;
  std::vector<double> mean_angular_error;
  double p90_distance = 0.0;
};

// Bins couplings by |x-z|; per bin, mean angle between u(z, 0, 1) and z - x.
DistanceErrorHistogram distance_error_histogram(const MeanFlowModel& model,
                                                const CouplingSet& set,
                                                std::size_t n_bins);

void export_histogram_csv(const std::string& path,
                          const DistanceErrorHistogram& h);

struct EvalReport {
  std::string method;
  double outlier_rate = 0.0;
  double energy_distance = 0.0;
  double mean_angular_error = 0.0;  // radians; NaN-free, 0 when undefined
  double straightness = 0.0;
  double lipschitz_estimate = 0.0;
  bool failed = false;
  std::string failure_reason;
  BudgetLedger budget;

  void validate() const;
};

// Flat key-value text document.
void save_eval_report(const std::string& path, const EvalReport& report);

}  // namespace rmf
