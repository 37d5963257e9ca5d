#include "remeanflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "remeanflow/util.hpp"

namespace rmf {

namespace {

double norm2(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

double pair_mean_distance(const Tensor& a, const Tensor& b) {
  std::size_t na = a.rows(), nb = b.rows(), d = a.cols();
  double acc = 0.0;
  for (std::size_t i = 0; i < na; ++i) {
    const double* pa = a.values.data() + i * d;
    for (std::size_t k = 0; k < nb; ++k) {
      const double* pb = b.values.data() + k * d;
      double sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        double diff = pa[j] - pb[j];
        sq += diff * diff;
      }
      acc += std::sqrt(sq);
    }
  }
  return acc / (static_cast<double>(na) * static_cast<double>(nb));
}

Tensor subsample_rows(const Tensor& a, std::size_t cap, Rng& rng) {
  std::size_t n = a.rows(), d = a.cols();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  // Fisher-Yates prefix shuffle.
  for (std::size_t i = 0; i < cap; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.uniform() * (n - i));
    if (j >= n) j = n - 1;
    std::swap(idx[i], idx[j]);
  }
  Tensor out = Tensor::zeros({cap, d});
  for (std::size_t i = 0; i < cap; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = a.at(idx[i], j);
  return out;
}

}  // namespace

double angular_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail("angular_error: dimension mismatch");
  double na = norm2(a), nb = norm2(b);
  if (na < 1e-12 || nb < 1e-12)
    fail("angular_error: undefined angle for near-zero vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  double cosine = std::clamp(dot / (na * nb), -1.0, 1.0);
  return std::acos(cosine);
}

double outlier_rate(const Tensor& samples, const GaussianMixture& target,
                    double log_density_threshold) {
  if (!std::isfinite(log_density_threshold))
    fail("outlier_rate: threshold must be finite");
  std::size_t n = samples.rows();
  std::size_t outliers = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> p = samples.row(i);
    if (log_density(target, p) < log_density_threshold) ++outliers;
  }
  return static_cast<double>(outliers) / static_cast<double>(n);
}

double default_outlier_threshold(const GaussianMixture& target,
                                 double n_sigma) {
  target.validate();
  // Single-component log-density n_sigma standard deviations out; the other
  // components only add mass, so this bound is conservative.
  double var = target.scale * target.scale;
  double log_norm = -0.5 * static_cast<double>(target.dim()) *
                    std::log(2.0 * std::numbers::pi * var);
  double best = -std::numeric_limits<double>::infinity();
  for (double w : target.weights)
    if (w > 0.0) best = std::max(best, std::log(w));
  return best + log_norm - 0.5 * n_sigma * n_sigma;
}

double energy_distance(const Tensor& a, const Tensor& b, Rng* rng,
                       std::size_t cap) {
  if (a.rows() == 0 || b.rows() == 0) fail("energy_distance: empty set");
  if (a.cols() != b.cols()) fail("energy_distance: dimension mismatch");
  Tensor aa = a, bb = b;
  if (a.rows() > cap || b.rows() > cap) {
    Rng fallback(0);
    Rng& r = rng ? *rng : fallback;
    if (a.rows() > cap) aa = subsample_rows(a, cap, r);
    if (b.rows() > cap) bb = subsample_rows(b, cap, r);
  }
  return 2.0 * pair_mean_distance(aa, bb) - pair_mean_distance(aa, aa) -
         pair_mean_distance(bb, bb);
}

LossHeatmap loss_heatmap(const MeanFlowModel& model, const CouplingSet& set,
                         std::size_t grid_n, std::size_t n_draws, Rng& rng) {
  if (grid_n < 2) fail("loss_heatmap: grid_n must be >= 2");
  if (set.couplings.empty()) fail("loss_heatmap: empty coupling set");
  model.validate();
  std::size_t cells = grid_n * grid_n;
  std::vector<double> sum(cells, 0.0), sumsq(cells, 0.0);
  std::vector<std::uint64_t> count(cells, 0);

  std::size_t d = set.dim();
  const std::size_t chunk = 4096;
  std::size_t done = 0;
  while (done < n_draws) {
    std::size_t n = std::min(chunk, n_draws - done);
    std::vector<double> r(n), t(n);
    Tensor x = Tensor::zeros({n, d}), z = Tensor::zeros({n, d});
    std::vector<int> cls(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
      // Uniform on the triangle r <= t via order statistics of two uniforms.
      double u1 = rng.uniform(), u2 = rng.uniform();
      r[i] = std::min(u1, u2);
      t[i] = std::max(u1, u2);
      auto idx = static_cast<std::size_t>(rng.uniform() * set.size());
      if (idx >= set.size()) idx = set.size() - 1;
      const Coupling& c = set.couplings[idx];
      for (std::size_t j = 0; j < d; ++j) {
        x.at(i, j) = c.x[j];
        z.at(i, j) = c.z[j];
      }
      cls[i] = c.cls;
    }
    Tensor z_t = Tensor::zeros({n, d}), tangent = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        z_t.at(i, j) = (1.0 - t[i]) * x.at(i, j) + t[i] * z.at(i, j);
        tangent.at(i, j) = z.at(i, j) - x.at(i, j);
      }
    const std::vector<int>* cls_ptr =
        model.num_classes > 0 ? &cls : nullptr;
    Tensor u_tgt =
        meanflow_target(model, z_t, tangent, r, t, cls_ptr, tangent);
    Tensor u_pred = model.mean_velocity(z_t, r, t, cls_ptr);
    for (std::size_t i = 0; i < n; ++i) {
      double e = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        double diff = u_pred.at(i, j) - u_tgt.at(i, j);
        e += diff * diff;
      }
      auto ti = std::min(grid_n - 1,
                         static_cast<std::size_t>(t[i] * grid_n));
      auto ri = std::min(grid_n - 1,
                         static_cast<std::size_t>(r[i] * grid_n));
      std::size_t cell = ti * grid_n + ri;
      sum[cell] += e;
      sumsq[cell] += e * e;
      ++count[cell];
    }
    done += n;
  }

  LossHeatmap hm;
  hm.grid_n = grid_n;
  hm.mean.assign(cells, 0.0);
  hm.stdev.assign(cells, 0.0);
  hm.count = std::move(count);
  for (std::size_t c = 0; c < cells; ++c) {
    if (hm.count[c] == 0) continue;
    double n = static_cast<double>(hm.count[c]);
    hm.mean[c] = sum[c] / n;
    double var = sumsq[c] / n - hm.mean[c] * hm.mean[c];
    hm.stdev[c] = std::sqrt(std::max(0.0, var));
  }
  return hm;
}

void export_heatmap_csv(const std::string& path, const LossHeatmap& hm) {
  std::ofstream out(path);
  if (!out) fail("export_heatmap_csv: cannot open '" + path + "'");
  out << "t_cell,r_cell,count,mean_loss,std_loss\n";
  out.precision(17);
  for (std::size_t ti = 0; ti < hm.grid_n; ++ti)
    for (std::size_t ri = 0; ri < hm.grid_n; ++ri) {
      std::size_t c = hm.cell(ti, ri);
      out << ti << "," << ri << "," << hm.count[c] << "," << hm.mean[c]
          << "," << hm.stdev[c] << "\n";
    }
}

DistanceErrorHistogram distance_error_histogram(const MeanFlowModel& model,
                                                const CouplingSet& set,
                                                std::size_t n_bins) {
  if (n_bins < 2) fail("distance_error_histogram: n_bins must be >= 2");
  if (set.couplings.empty()) fail("distance_error_histogram: empty set");
  model.validate();

  std::size_t d = set.dim();
  std::size_t n = set.size();
  Tensor z = Tensor::zeros({n, d});
  std::vector<int> cls(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const Coupling& c = set.couplings[i];
    for (std::size_t j = 0; j < d; ++j) z.at(i, j) = c.z[j];
    cls[i] = c.cls;
  }
  Tensor pred = one_step_sample(
      model, z, model.num_classes > 0 ? &cls : nullptr, nullptr);
  // u(z, 0, 1) = z - pred
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  std::vector<double> distances(n);
  for (std::size_t i = 0; i < n; ++i) {
    distances[i] = set.couplings[i].distance;
    lo = std::min(lo, distances[i]);
    hi = std::max(hi, distances[i]);
  }
  if (hi <= lo) hi = lo + 1.0;

  DistanceErrorHistogram h;
  h.count.assign(n_bins, 0);
  h.mean_angular_error.assign(n_bins, 0.0);
  h.bin_lo.resize(n_bins);
  h.bin_hi.resize(n_bins);
  double width = (hi - lo) / static_cast<double>(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    h.bin_lo[b] = lo + width * static_cast<double>(b);
    h.bin_hi[b] = h.bin_lo[b] + width;
  }
  std::vector<double> err_sum(n_bins, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Coupling& c = set.couplings[i];
    std::vector<double> u(d), ref(d);
    for (std::size_t j = 0; j < d; ++j) {
      u[j] = c.z[j] - pred.at(i, j);
      ref[j] = c.z[j] - c.x[j];
    }
    if (norm2(u) < 1e-12 || norm2(ref) < 1e-12) continue;
    auto b = std::min(n_bins - 1, static_cast<std::size_t>(
                                      (distances[i] - lo) / width));
    err_sum[b] += angular_error(u, ref);
    ++h.count[b];
  }
  for (std::size_t b = 0; b < n_bins; ++b)
    if (h.count[b] > 0)
      h.mean_angular_error[b] = err_sum[b] / static_cast<double>(h.count[b]);
  h.p90_distance = nearest_rank_percentile(distances, 90.0);
  return h;
}

void export_histogram_csv(const std::string& path,
                          const DistanceErrorHistogram& h) {
  std::ofstream out(path);
  if (!out) fail("export_histogram_csv: cannot open '" + path + "'");
  out << "bin_lo,bin_hi,count,mean_angular_error\n";
  out.precision(17);
  for (std::size_t b = 0; b < h.count.size(); ++b)
    out << h.bin_lo[b] << "," << h.bin_hi[b] << "," << h.count[b] << ","
        << h.mean_angular_error[b] << "\n";
}

void EvalReport::validate() const {
  if (failed) return;
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(outlier_rate) || !finite(energy_distance) ||
      !finite(mean_angular_error) || !finite(straightness) ||
      !finite(lipschitz_estimate))
    fail("EvalReport: non-finite field");
  if (outlier_rate < 0.0 || outlier_rate > 1.0)
    fail("EvalReport: outlier_rate outside [0, 1]");
}

void save_eval_report(const std::string& path, const EvalReport& report) {
  report.validate();
  std::ofstream out(path);
  if (!out) fail("save_eval_report: cannot open '" + path + "'");
  out.precision(17);
  out << "method=" << report.method << "\n"
      << "failed=" << (report.failed ? 1 : 0) << "\n";
  if (report.failed) out << "failure_reason=" << report.failure_reason << "\n";
  out << "outlier_rate=" << report.outlier_rate << "\n"
      << "energy_distance=" << report.energy_distance << "\n"
      << "mean_angular_error=" << report.mean_angular_error << "\n"
      << "straightness=" << report.straightness << "\n"
      << "lipschitz_estimate=" << report.lipschitz_estimate << "\n";
  for (int i = 0; i < kNumPhases; ++i) {
    out << "forward_evals." << phase_name(static_cast<Phase>(i)) << "="
        << report.budget.forward_evals[i] << "\n";
    out << "train_steps." << phase_name(static_cast<Phase>(i)) << "="
        << report.budget.train_steps[i] << "\n";
  }
  out << "forward_evals.total=" << report.budget.total_forward_evals() << "\n"
      << "train_steps.total=" << report.budget.total_train_steps() << "\n";
}

}  // namespace rmf
