#include "remeanflow/flow.hpp"

#include <atomic>
#include <cmath>
#include <string>
#include <thread>

#include "remeanflow/netio.hpp"
#include "remeanflow/util.hpp"

namespace rmf {

namespace {

// Lenient batched stepper: rows that go non-finite stay non-finite instead
// of aborting the whole batch. Returns the index of the first bad step, or
// steps if all rows stayed finite.
std::size_t integrate_rows(const FlowModel& model, Tensor& x,
                           std::size_t steps, Solver solver,
                           Direction direction, const std::vector<int>* cls,
                           BudgetLedger* ledger, Phase phase,
                           std::vector<Tensor>* trajectory) {
  double h = 1.0 / static_cast<double>(steps);
  double t = direction == Direction::kNoiseToData ? 1.0 : 0.0;
  double sign = direction == Direction::kNoiseToData ? -1.0 : 1.0;
  std::size_t first_bad = steps;
  if (trajectory) trajectory->push_back(x);
  for (std::size_t s = 0; s < steps; ++s) {
    Tensor k1 = model.velocity_at(x, t, cls);
    if (solver == Solver::kEuler) {
      for (std::size_t i = 0; i < x.size(); ++i)
        x.values[i] += sign * h * k1.values[i];
    } else {
      Tensor mid = x;
      for (std::size_t i = 0; i < x.size(); ++i)
        mid.values[i] += sign * h * k1.values[i];
      Tensor k2 = model.velocity_at(mid, t + sign * h, cls);
      for (std::size_t i = 0; i < x.size(); ++i)
        x.values[i] += sign * h * 0.5 * (k1.values[i] + k2.values[i]);
    }
    t += sign * h;
    if (ledger)
      ledger->add_forward(phase, x.rows() * (solver == Solver::kHeun ? 2 : 1));
    if (first_bad == steps && !x.all_finite()) first_bad = s;
    if (trajectory) trajectory->push_back(x);
  }
  return first_bad;
}

}  // namespace

void FlowModel::validate() const {
  net.validate();
  if (net.input_dim() != input_width())
    fail("FlowModel: net input width != data_dim + 1 + num_classes");
  if (net.output_dim() != data_dim)
    fail("FlowModel: net output width != data dimension");
}

Tensor FlowModel::velocity(const Tensor& z_t, const std::vector<double>& t,
                           const std::vector<int>* cls) const {
  Tensor in = assemble_net_input(z_t, {&t}, num_classes, cls);
  return mlp_forward(net, in);
}

Tensor FlowModel::velocity_at(const Tensor& z_t, double t,
                              const std::vector<int>* cls) const {
  std::vector<double> ts(z_t.rows(), t);
  return velocity(z_t, ts, cls);
}

IndependentCouplings::IndependentCouplings(const ToyTask& task)
    : task_(task), prior_(task.prior()) {
  task_.validate();
}

void IndependentCouplings::sample(std::size_t n, Rng& rng, Tensor& x,
                                  Tensor& z, std::vector<int>* cls) const {
  std::vector<int> comps;
  x = sample_mixture(task_.target, n, rng, cls ? &comps : nullptr);
  z = sample_mixture(prior_, n, rng);
  if (cls) {
    cls->resize(n);
    for (std::size_t i = 0; i < n; ++i)
      (*cls)[i] = task_.class_labels.empty()
                      ? comps[i]
                      : task_.class_labels[comps[i]];
  }
}

DatasetCouplings::DatasetCouplings(const CouplingSet& set) : set_(&set) {
  if (set.couplings.empty()) fail("DatasetCouplings: empty coupling set");
}

std::size_t DatasetCouplings::dim() const { return set_->dim(); }

void DatasetCouplings::sample(std::size_t n, Rng& rng, Tensor& x, Tensor& z,
                              std::vector<int>* cls) const {
  std::size_t d = set_->dim();
  x = Tensor::zeros({n, d});
  z = Tensor::zeros({n, d});
  if (cls) cls->assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    auto idx = static_cast<std::size_t>(rng.uniform() * set_->size());
    if (idx >= set_->size()) idx = set_->size() - 1;
    const Coupling& c = set_->couplings[idx];
    for (std::size_t j = 0; j < d; ++j) {
      x.at(i, j) = c.x[j];
      z.at(i, j) = c.z[j];
    }
    if (cls) (*cls)[i] = c.cls;
  }
}

FlowTrainResult train_rectified_flow(const CouplingSource& source,
                                     const FlowTrainConfig& cfg, Rng& rng,
                                     BudgetLedger* ledger, Phase phase) {
  if (cfg.iters == 0) fail("train_rectified_flow: iters must be positive");
  if (cfg.batch == 0) fail("train_rectified_flow: batch must be positive");
  if (cfg.conditional && cfg.num_classes == 0)
    fail("train_rectified_flow: conditional training needs num_classes");

  std::size_t d = source.dim();
  FlowModel model;
  model.data_dim = d;
  model.num_classes = cfg.conditional ? cfg.num_classes : 0;
  std::vector<std::size_t> sizes;
  sizes.push_back(model.input_width());
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(d);
  model.net = MlpModel::init(sizes, cfg.activation, rng);

  AdamOptimizer opt(model.net, cfg.adam);
  FlowTrainResult result;
  result.loss_trace.reserve(cfg.iters);

  Tensor x, z;
  std::vector<int> cls_buf;
  std::vector<int>* cls = cfg.conditional ? &cls_buf : nullptr;
  for (std::size_t step = 0; step < cfg.iters; ++step) {
    source.sample(cfg.batch, rng, x, z, cls);
    if (cls && cfg.class_dropout > 0.0)
      for (auto& c : *cls)
        if (rng.uniform() < cfg.class_dropout) c = -1;
    std::vector<double> t(cfg.batch);
    for (auto& ti : t) ti = rng.uniform();
    Tensor z_t = Tensor::zeros({cfg.batch, d});
    Tensor target = Tensor::zeros({cfg.batch, d});
    for (std::size_t i = 0; i < cfg.batch; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double xi = x.at(i, j), zi = z.at(i, j);
        z_t.at(i, j) = (1.0 - t[i]) * xi + t[i] * zi;
        target.at(i, j) = zi - xi;
      }

    Tensor in = assemble_net_input(z_t, {&t}, model.num_classes, cls);
    Tensor pred = mlp_forward(model.net, in);

    double loss = 0.0;
    Tensor upstream = Tensor::zeros(pred.shape);
    double inv_b = 1.0 / static_cast<double>(cfg.batch);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      double diff = pred.values[i] - target.values[i];
      loss += diff * diff;
      upstream.values[i] = 2.0 * diff * inv_b;
    }
    loss *= inv_b;
    if (!std::isfinite(loss))
      fail("train_rectified_flow: non-finite loss at step " +
           std::to_string(step));
    result.loss_trace.push_back(loss);

    MlpGradients grads = mlp_backward(model.net, in, upstream);
    opt.step(model.net, grads);
    if (ledger) ledger->add_train_step(phase);
    if (cfg.snapshot_every > 0 && cfg.snapshot_cb &&
        (step + 1) % cfg.snapshot_every == 0)
      cfg.snapshot_cb(model, step + 1);
  }
  result.model = std::move(model);
  return result;
}

std::string solver_name(Solver s) {
  return s == Solver::kEuler ? "euler" : "heun";
}

Solver solver_from_name(const std::string& name) {
  if (name == "euler") return Solver::kEuler;
  if (name == "heun") return Solver::kHeun;
  fail("unknown solver '" + name + "'");
}

Tensor integrate_ode(const FlowModel& model, const Tensor& start,
                     std::size_t steps, Solver solver, Direction direction,
                     const std::vector<int>* cls, BudgetLedger* ledger,
                     Phase phase) {
  if (steps == 0) fail("integrate_ode: steps must be >= 1");
  model.validate();
  Tensor x = start;
  std::size_t bad =
      integrate_rows(model, x, steps, solver, direction, cls, ledger, phase,
                     nullptr);
  if (bad != steps)
    fail("integrate_ode: non-finite state at step " + std::to_string(bad));
  return x;
}

GenerateResult generate_couplings(const FlowModel& model, const ToyTask& task,
                                  std::size_t n_pairs, std::size_t steps,
                                  Solver solver, Rng& rng,
                                  BudgetLedger* ledger,
                                  std::size_t block_size,
                                  std::size_t workers) {
  if (n_pairs == 0) fail("generate_couplings: n_pairs must be positive");
  if (block_size == 0) fail("generate_couplings: block_size must be positive");
  if (workers == 0) fail("generate_couplings: workers must be positive");
  model.validate();
  task.validate();
  bool conditional = model.num_classes > 0;

  GenerateResult result;
  result.set.provenance.solver = solver_name(solver);
  result.set.provenance.steps = steps;
  result.set.provenance.seed = rng.seed();
  result.set.provenance.generator_checkpoint = "unset";
  result.set.couplings.reserve(n_pairs);

  struct BlockOut {
    std::vector<Coupling> couplings;
    std::size_t failed = 0;
  };
  std::size_t n_blocks = (n_pairs + block_size - 1) / block_size;
  std::vector<BlockOut> blocks(n_blocks);

  auto run_block = [&](std::size_t b) {
    std::size_t lo = b * block_size;
    std::size_t n = std::min(block_size, n_pairs - lo);
    Rng block_rng = rng.derive(b);
    std::vector<int> comps;
    Tensor x = sample_mixture(task.target, n, block_rng, &comps);
    std::vector<int> cls(n, -1);
    if (conditional)
      for (std::size_t i = 0; i < n; ++i)
        cls[i] = task.class_labels.empty() ? comps[i]
                                           : task.class_labels[comps[i]];
    Tensor z = x;
    integrate_rows(model, z, steps, solver, Direction::kDataToNoise,
                   conditional ? &cls : nullptr, nullptr,
                   Phase::kReflowSampling, nullptr);
    BlockOut& out = blocks[b];
    for (std::size_t i = 0; i < n; ++i) {
      Coupling c;
      c.x = x.row(i);
      c.z = z.row(i);
      bool ok = true;
      for (double v : c.z)
        if (!std::isfinite(v)) ok = false;
      if (!ok) {
        ++out.failed;
        continue;
      }
      c.cls = conditional ? cls[i] : -1;
      c.distance = Coupling::compute_distance(c.x, c.z);
      out.couplings.push_back(std::move(c));
    }
  };

  if (workers == 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) run_block(b);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n_blocks); ++w)
      pool.emplace_back([&] {
        for (std::size_t b = next.fetch_add(1); b < n_blocks;
             b = next.fetch_add(1))
          run_block(b);
      });
    for (auto& t : pool) t.join();
  }

  // Accounting happens after the fan-out so counters stay exact: every
  // block costs steps * rows forwards regardless of divergence.
  if (ledger)
    ledger->add_forward(
        Phase::kReflowSampling,
        static_cast<std::uint64_t>(n_pairs) * steps *
            (solver == Solver::kHeun ? 2 : 1));
  for (auto& b : blocks) {
    result.failed_pairs += b.failed;
    for (auto& c : b.couplings) result.set.couplings.push_back(std::move(c));
  }
  if (result.set.couplings.empty())
    fail("generate_couplings: every trajectory diverged");
  return result;
}

double straightness_deviation(const FlowModel& model, const Tensor& z,
                              std::size_t steps,
                              const std::vector<int>* cls) {
  if (steps < 2) fail("straightness_deviation: steps must be >= 2");
  model.validate();
  std::vector<Tensor> traj;
  Tensor x = z;
  std::size_t bad = integrate_rows(model, x, steps, Solver::kEuler,
                                   Direction::kNoiseToData, cls, nullptr,
                                   Phase::kEval, &traj);
  if (bad != steps)
    fail("straightness_deviation: non-finite state at step " +
         std::to_string(bad));
  std::size_t n = z.rows();
  std::size_t d = z.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> a = traj.front().row(i);
    std::vector<double> b = traj.back().row(i);
    std::vector<double> chord(d);
    double chord_sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      chord[j] = b[j] - a[j];
      chord_sq += chord[j] * chord[j];
    }
    double chord_len = std::sqrt(chord_sq);
    if (chord_len < 1e-12) continue;  // degenerate chord counts as straight
    double acc = 0.0;
    for (std::size_t s = 1; s + 1 < traj.size(); ++s) {
      std::vector<double> p = traj[s].row(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += (p[j] - a[j]) * chord[j];
      double proj = dot / chord_sq;
      double perp_sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        double res = p[j] - a[j] - proj * chord[j];
        perp_sq += res * res;
      }
      acc += std::sqrt(perp_sq);
    }
    total += acc / static_cast<double>(traj.size() - 2) / chord_len;
  }
  return total / static_cast<double>(n);
}

}  // namespace rmf
