#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "remeanflow/budget.hpp"
#include "remeanflow/metrics.hpp"
#include "remeanflow/util.hpp"

using namespace rmf;

namespace {

// u(z, r, t) = b everywhere.
MeanFlowModel const_meanflow(double b0, double b1) {
  MeanFlowModel m;
  m.data_dim = 2;
  m.net.layer_sizes = {4, 2};
  m.net.weights = {Tensor::zeros({2, 4})};
  m.net.biases = {Tensor({2}, {b0, b1})};
  return m;
}

Coupling make_coupling(std::vector<double> x, std::vector<double> z) {
  Coupling c;
  c.x = std::move(x);
  c.z = std::move(z);
  c.distance = Coupling::compute_distance(c.x, c.z);
  return c;
}

}  // namespace

TEST_CASE("angular error hand values and invariances") {
  std::vector<double> e0 = {1.0, 0.0}, diag = {1.0, 1.0};
  CHECK(angular_error(e0, diag) ==
        doctest::Approx(std::numbers::pi / 4).epsilon(1e-14));
  CHECK(angular_error(diag, e0) == angular_error(e0, diag));
  std::vector<double> scaled = {7.5, 0.0};
  CHECK(angular_error(scaled, diag) == angular_error(e0, diag));
  std::vector<double> neg = {-1.0, 0.0};
  CHECK(angular_error(e0, neg) ==
        doctest::Approx(std::numbers::pi).epsilon(1e-14));
  CHECK(angular_error(e0, e0) == 0.0);
  std::vector<double> zero = {0.0, 0.0};
  CHECK_THROWS_AS(angular_error(e0, zero), Error);
}

TEST_CASE("outlier threshold closed form and rate") {
  GaussianMixture target;
  target.weights = {1.0};
  target.means = {{0.0, 0.0}};
  target.scale = 1.0;
  double thr = default_outlier_threshold(target, 4.0);
  CHECK(thr == doctest::Approx(-std::log(2.0 * std::numbers::pi) - 8.0)
                   .epsilon(1e-14));
  // One point at the mean, one far outside 4 sigma.
  Tensor samples({2, 2}, {0.0, 0.0, 10.0, 0.0});
  CHECK(outlier_rate(samples, target, thr) == 0.5);
}

TEST_CASE("energy distance matches the brute-force definition") {
  Tensor a({2, 2}, {0.0, 0.0, 1.0, 0.0});
  Tensor b({2, 2}, {0.0, 1.0, 2.0, 2.0});
  auto dist = [](double x0, double y0, double x1, double y1) {
    return std::hypot(x0 - x1, y0 - y1);
  };
  double eab = (dist(0, 0, 0, 1) + dist(0, 0, 2, 2) + dist(1, 0, 0, 1) +
                dist(1, 0, 2, 2)) /
               4.0;
  double eaa = (0.0 + 1.0 + 1.0 + 0.0) / 4.0;
  double ebb = (0.0 + dist(0, 1, 2, 2) + dist(0, 1, 2, 2) + 0.0) / 4.0;
  CHECK(energy_distance(a, b) ==
        doctest::Approx(2 * eab - eaa - ebb).epsilon(1e-14));
}

TEST_CASE("energy distance of identical sets is zero") {
  Rng rng(3);
  Tensor a = Tensor::zeros({50, 2});
  for (double& v : a.values) v = rng.normal();
  CHECK(energy_distance(a, a) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("energy distance of two point masses is twice the gap") {
  Tensor a = Tensor::zeros({10, 2});
  Tensor b = Tensor::zeros({7, 2});
  for (std::size_t i = 0; i < b.rows(); ++i) {
    b.at(i, 0) = 3.0;
    b.at(i, 1) = 4.0;
  }
  CHECK(energy_distance(a, b) == doctest::Approx(10.0).epsilon(1e-14));
}

TEST_CASE("energy distance subsampling is seed-deterministic") {
  Rng data(8);
  Tensor a = Tensor::zeros({6000, 2}), b = Tensor::zeros({6000, 2});
  for (double& v : a.values) v = data.normal();
  for (double& v : b.values) v = data.normal(0.5, 1.0);
  Rng r1(9), r2(9);
  double d1 = energy_distance(a, b, &r1);
  double d2 = energy_distance(a, b, &r2);
  CHECK(d1 == d2);
  CHECK(d1 > 0.0);
}

TEST_CASE("flops estimates are exactly linear") {
  double base = train_flops(1000, 256, 3.0, 1e9);
  CHECK(train_flops(2000, 256, 3.0, 1e9) == 2.0 * base);
  CHECK(train_flops(1000, 512, 3.0, 1e9) == 2.0 * base);
  CHECK(train_flops(1000, 256, 6.0, 1e9) == 2.0 * base);
  CHECK(train_flops(1000, 256, 3.0, 2e9) == 2.0 * base);
  double sbase = sample_flops(100, 10, 1.0, 1e9);
  CHECK(sample_flops(200, 10, 1.0, 1e9) == 2.0 * sbase);
  CHECK(sample_flops(100, 20, 1.0, 1e9) == 2.0 * sbase);
  CHECK(sbase == 100.0 * 10.0 * 1.0 * 1e9);
}

TEST_CASE("budget ledger conservation and merge") {
  BudgetLedger a;
  a.add_forward(Phase::kStage1Train, 10);
  a.add_forward(Phase::kEval, 5);
  a.add_train_step(Phase::kStage1Train, 3);
  CHECK(a.total_forward_evals() == 15);
  CHECK(a.total_train_steps() == 3);
  BudgetLedger b;
  b.add_forward(Phase::kReflowSampling, 7);
  b.merge(a);
  CHECK(b.total_forward_evals() == 22);
  CHECK(b.forward_evals[static_cast<int>(Phase::kEval)] == 5);
}

TEST_CASE("heatmap on a constructed case") {
  // Zero-weight model: prediction is b, target is the coupling direction c,
  // so every populated cell has mean |b - c|^2 and zero spread.
  MeanFlowModel m = const_meanflow(0.0, 0.0);
  CouplingSet set;
  set.couplings.push_back(make_coupling({0.0, 0.0}, {3.0, 4.0}));
  Rng rng(17);
  LossHeatmap hm = loss_heatmap(m, set, 5, 20000, rng);
  std::uint64_t total = 0;
  for (std::size_t ti = 0; ti < 5; ++ti)
    for (std::size_t ri = 0; ri < 5; ++ri) {
      std::size_t c = hm.cell(ti, ri);
      total += hm.count[c];
      if (ri > ti) CHECK(hm.count[c] == 0);
      if (hm.count[c] > 0) {
        CHECK(hm.mean[c] == doctest::Approx(25.0).epsilon(1e-12));
        CHECK(hm.stdev[c] <= 1e-6);
      }
    }
  CHECK(total == 20000);
  // The model that predicts the direction exactly has zero loss.
  MeanFlowModel exact = const_meanflow(3.0, 4.0);
  Rng rng2(18);
  LossHeatmap zero = loss_heatmap(exact, set, 5, 5000, rng2);
  for (std::size_t c = 0; c < zero.mean.size(); ++c)
    CHECK(zero.mean[c] <= 1e-20);
}

TEST_CASE("heatmap csv export") {
  MeanFlowModel m = const_meanflow(1.0, 1.0);
  CouplingSet set;
  set.couplings.push_back(make_coupling({0.0, 0.0}, {1.0, 0.0}));
  Rng rng(19);
  LossHeatmap hm = loss_heatmap(m, set, 3, 500, rng);
  std::string path =
      (std::filesystem::temp_directory_path() / "rmf_hm.csv").string();
  export_heatmap_csv(path, hm);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t_cell,r_cell,count,mean_loss,std_loss");
  std::size_t lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 9);
  std::filesystem::remove(path);
}

TEST_CASE("distance histogram separates aligned and orthogonal couplings") {
  // Model transports along +x. Short couplings point along +x (angle 0),
  // long couplings along +y (angle pi/2).
  MeanFlowModel m = const_meanflow(1.0, 0.0);
  CouplingSet set;
  for (int i = 0; i < 10; ++i)
    set.couplings.push_back(make_coupling({0.0, 0.0}, {1.0, 0.0}));
  for (int i = 0; i < 10; ++i)
    set.couplings.push_back(make_coupling({0.0, 0.0}, {0.0, 9.0}));
  DistanceErrorHistogram h = distance_error_histogram(m, set, 4);
  CHECK(h.count.front() == 10);
  CHECK(h.count.back() == 10);
  CHECK(h.mean_angular_error.front() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(h.mean_angular_error.back() ==
        doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));
  // Nearest-rank 90th percentile of {1 x10, 9 x10}: rank ceil(0.9*20) = 18.
  CHECK(h.p90_distance == 9.0);
}

TEST_CASE("eval report validation and round trip keys") {
  EvalReport rep;
  rep.method = "test";
  rep.outlier_rate = 0.25;
  rep.energy_distance = 1.5;
  rep.validate();
  rep.outlier_rate = 1.5;
  CHECK_THROWS_AS(rep.validate(), Error);
  rep.outlier_rate = 0.25;
  rep.budget.add_forward(Phase::kEval, 11);
  std::string path =
      (std::filesystem::temp_directory_path() / "rmf_report.txt").string();
  save_eval_report(path, rep);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("method=test") != std::string::npos);
  CHECK(text.find("outlier_rate=0.25") != std::string::npos);
  CHECK(text.find("forward_evals.total=11") != std::string::npos);
  // Failed reports skip metric validation but record the reason.
  EvalReport bad;
  bad.method = "broken";
  bad.failed = true;
  bad.failure_reason = "diverged";
  bad.energy_distance = std::nan("");
  save_eval_report(path, bad);
  std::ifstream in2(path);
  std::string text2((std::istreambuf_iterator<char>(in2)),
                    std::istreambuf_iterator<char>());
  CHECK(text2.find("failure_reason=diverged") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("phase names are distinct") {
  CHECK(phase_name(Phase::kStage1Train) != phase_name(Phase::kStage3Train));
  CHECK(phase_name(Phase::kReflowSampling) != phase_name(Phase::kEval));
}
