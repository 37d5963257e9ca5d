#include "remeanflow/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "remeanflow/checkpoint.hpp"
#include "remeanflow/svg.hpp"
#include "remeanflow/util.hpp"

namespace rmf {

namespace fs = std::filesystem;
using nlohmann::json;

RunPaths RunPaths::create(const std::string& out_dir) {
  RunPaths p;
  p.root = out_dir;
  p.checkpoints = (fs::path(out_dir) / "checkpoints").string();
  p.couplings = (fs::path(out_dir) / "couplings").string();
  p.reports = (fs::path(out_dir) / "reports").string();
  p.figures = (fs::path(out_dir) / "figures").string();
  std::error_code ec;
  for (const auto& d : {p.root, p.checkpoints, p.couplings, p.reports,
                        p.figures}) {
    fs::create_directories(d, ec);
    if (ec) fail("pipeline: cannot create directory '" + d + "'");
  }
  return p;
}

namespace {

json model_meta(const std::string& kind, std::size_t data_dim,
                std::size_t num_classes, const std::string& config_digest) {
  return {{"kind", kind},
          {"data_dim", data_dim},
          {"num_classes", num_classes},
          {"config_hash", config_digest}};
}

void check_kind(const json& meta, const std::string& want,
                const std::string& path) {
  if (!meta.contains("kind") || meta.at("kind").get<std::string>() != want)
    fail("checkpoint '" + path + "' is not a " + want + " model");
}

}  // namespace

void save_flow_checkpoint(const std::string& path, const FlowModel& model,
                          const std::string& config_digest) {
  save_checkpoint(path, model.net,
                  model_meta("flow", model.data_dim, model.num_classes,
                             config_digest));
}

FlowModel load_flow_checkpoint(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  check_kind(ck.metadata, "flow", path);
  FlowModel m;
  m.net = std::move(ck.model);
  m.data_dim = ck.metadata.at("data_dim").get<std::size_t>();
  m.num_classes = ck.metadata.at("num_classes").get<std::size_t>();
  m.validate();
  return m;
}

void save_meanflow_checkpoint(const std::string& path,
                              const MeanFlowModel& model,
                              const std::string& config_digest) {
  save_checkpoint(path, model.net,
                  model_meta("meanflow", model.data_dim, model.num_classes,
                             config_digest));
}

MeanFlowModel load_meanflow_checkpoint(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  check_kind(ck.metadata, "meanflow", path);
  MeanFlowModel m;
  m.net = std::move(ck.model);
  m.data_dim = ck.metadata.at("data_dim").get<std::size_t>();
  m.num_classes = ck.metadata.at("num_classes").get<std::size_t>();
  m.validate();
  return m;
}

FlowTrainConfig make_flow_train_config(const RunConfig& cfg) {
  FlowTrainConfig fc;
  fc.iters = cfg.stage1.iters;
  fc.batch = cfg.stage1.batch;
  fc.hidden = cfg.net.hidden;
  fc.activation = cfg.net.activation;
  fc.adam = cfg.adam;
  fc.conditional = cfg.conditional;
  fc.num_classes = cfg.conditional ? cfg.task.num_classes() : 0;
  return fc;
}

MeanFlowTrainConfig make_meanflow_train_config(const RunConfig& cfg,
                                               const FlowModel* frozen_flow) {
  MeanFlowTrainConfig mc;
  mc.iters = cfg.stage3.iters;
  mc.batch = cfg.stage3.batch;
  mc.hidden = cfg.net.hidden;
  mc.activation = cfg.net.activation;
  mc.adam = cfg.adam;
  mc.time = cfg.stage3.time;
  mc.loss_p = cfg.stage3.loss_p;
  mc.loss_c = cfg.stage3.loss_c;
  mc.velocity_source = cfg.stage3.velocity_source;
  mc.frozen_flow = frozen_flow;
  mc.conditional = cfg.conditional;
  mc.num_classes = cfg.conditional ? cfg.task.num_classes() : 0;
  mc.class_dropout = cfg.stage3.class_dropout;
  mc.cfg = cfg.stage3.guidance ? &*cfg.stage3.guidance : nullptr;
  return mc;
}

Stage1Result run_stage1(const RunConfig& cfg, BudgetLedger& ledger) {
  cfg.validate();
  if (cfg.stage1.iters == 0) fail("stage1: iters must be > 0");
  ledger.flops_per_forward = cfg.flops_per_forward;
  Rng rng = Rng(cfg.seed).derive(streams::kStage1);
  IndependentCouplings source(cfg.task);
  FlowTrainConfig fc = make_flow_train_config(cfg);
  FlowTrainResult r =
      train_rectified_flow(source, fc, rng, &ledger, Phase::kStage1Train);
  return {std::move(r.model), std::move(r.loss_trace)};
}

Stage2Result run_stage2(const RunConfig& cfg, const FlowModel& flow,
                        BudgetLedger& ledger, std::size_t workers) {
  cfg.validate();
  if (cfg.stage2.n_pairs == 0) fail("stage2: n_pairs must be > 0");
  ledger.flops_per_forward = cfg.flops_per_forward;
  Rng rng = Rng(cfg.seed).derive(streams::kStage2);
  GenerateResult gen =
      generate_couplings(flow, cfg.task, cfg.stage2.n_pairs, cfg.stage2.steps,
                         cfg.stage2.solver, rng, &ledger,
                         cfg.stage2.block_size, workers);
  gen.set.provenance.generator_checkpoint = config_hash(cfg);
  Stage2Result out;
  out.failed_pairs = gen.failed_pairs;
  out.truncated = truncate_by_distance(gen.set, cfg.stage2.truncate_k);
  out.raw = std::move(gen.set);
  return out;
}

Stage3Result run_stage3(const RunConfig& cfg, const CouplingSet& couplings,
                        const FlowModel* frozen_flow, BudgetLedger& ledger) {
  cfg.validate();
  if (cfg.stage3.iters == 0) fail("stage3: iters must be > 0");
  couplings.validate();
  ledger.flops_per_forward = cfg.flops_per_forward;
  Rng rng = Rng(cfg.seed).derive(streams::kStage3);
  DatasetCouplings source(couplings);
  MeanFlowTrainConfig mc = make_meanflow_train_config(cfg, frozen_flow);
  MeanFlowTrainResult r =
      train_meanflow(source, mc, rng, &ledger, Phase::kStage3Train);
  return {std::move(r.model), std::move(r.loss_trace)};
}

EvalInputs make_eval_inputs(const RunConfig& cfg, Rng& rng) {
  EvalInputs in;
  GaussianMixture prior = cfg.task.prior();
  in.prior_draws = sample_mixture(prior, cfg.compare.n_eval, rng);
  if (cfg.conditional) {
    in.cls.resize(cfg.compare.n_eval);
    for (std::size_t i = 0; i < cfg.compare.n_eval; ++i) {
      std::size_t k = rng.categorical(cfg.task.target.weights);
      in.cls[i] = cfg.task.class_labels.empty()
                      ? static_cast<int>(k)
                      : cfg.task.class_labels[k];
    }
  }
  in.target_draws = sample_mixture(cfg.task.target, cfg.compare.n_eval, rng);
  in.outlier_threshold = default_outlier_threshold(cfg.task.target);
  return in;
}

namespace {

// Mean angle between predicted transport directions and the stored z - x,
// over at most `cap` couplings; rows with a degenerate norm are skipped.
double coupling_angular_error(const CouplingSet& set,
                              const std::function<Tensor(const Tensor&)>& pred,
                              std::size_t cap = 1000) {
  std::size_t n = std::min(cap, set.size());
  if (n == 0) return 0.0;
  std::size_t d = set.dim();
  Tensor z = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) z.at(i, j) = set.couplings[i].z[j];
  Tensor u = pred(z);
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> ref(d);
    for (std::size_t j = 0; j < d; ++j)
      ref[j] = set.couplings[i].z[j] - set.couplings[i].x[j];
    double nu = 0.0, nr = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      nu += u.at(i, j) * u.at(i, j);
      nr += ref[j] * ref[j];
    }
    if (nu < 1e-20 || nr < 1e-20) continue;
    std::vector<double> ui(d);
    for (std::size_t j = 0; j < d; ++j) ui[j] = u.at(i, j);
    sum += angular_error(ui, ref);
    ++used;
  }
  return used ? sum / static_cast<double>(used) : 0.0;
}

void fill_common_metrics(const RunConfig& cfg, const EvalInputs& in,
                         const Tensor& samples, EvalReport& rep) {
  rep.outlier_rate =
      outlier_rate(samples, cfg.task.target, in.outlier_threshold);
  Rng ed_rng = Rng(cfg.seed).derive(streams::kEval + 17);
  rep.energy_distance = energy_distance(samples, in.target_draws, &ed_rng);
}

Tensor eval_subset(const Tensor& full, std::size_t cap) {
  std::size_t n = std::min(cap, full.rows());
  Tensor out = Tensor::zeros({n, full.cols()});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < full.cols(); ++j)
      out.at(i, j) = full.at(i, j);
  return out;
}

}  // namespace

EvalReport evaluate_meanflow(const RunConfig& cfg, const MeanFlowModel& model,
                             const EvalInputs& in, BudgetLedger ledger,
                             const CouplingSet* holdout,
                             const FlowModel* traj_flow, Tensor* samples_out) {
  EvalReport rep;
  rep.method = "meanflow_one_step";
  const std::vector<int>* cls = in.cls.empty() ? nullptr : &in.cls;
  Tensor samples = one_step_sample(model, in.prior_draws, cls, &ledger);
  if (!samples.all_finite()) {
    rep.failed = true;
    rep.failure_reason = "non-finite one-step samples";
    rep.budget = ledger;
    return rep;
  }
  fill_common_metrics(cfg, in, samples, rep);
  if (holdout && holdout->size() > 0) {
    rep.mean_angular_error = coupling_angular_error(
        *holdout, [&](const Tensor& z) {
          std::vector<double> r0(z.rows(), 0.0), t1(z.rows(), 1.0);
          return model.mean_velocity(z, r0, t1, nullptr);
        });
    Rng lip_rng = Rng(cfg.seed).derive(streams::kEval + 29);
    rep.lipschitz_estimate = empirical_lipschitz(*holdout, 2000, lip_rng);
  }
  if (traj_flow) {
    Tensor sub = eval_subset(in.prior_draws, 256);
    rep.straightness =
        straightness_deviation(*traj_flow, sub, cfg.stage2.steps);
  }
  rep.budget = ledger;
  if (samples_out) *samples_out = std::move(samples);
  return rep;
}

EvalReport evaluate_flow_one_step(const RunConfig& cfg, const FlowModel& model,
                                  const EvalInputs& in, BudgetLedger ledger,
                                  const CouplingSet* holdout,
                                  Tensor* samples_out) {
  EvalReport rep;
  rep.method = "flow_one_step_euler";
  const std::vector<int>* cls = in.cls.empty() ? nullptr : &in.cls;
  Tensor samples =
      integrate_ode(model, in.prior_draws, 1, Solver::kEuler,
                    Direction::kNoiseToData, cls, &ledger, Phase::kEval);
  if (!samples.all_finite()) {
    rep.failed = true;
    rep.failure_reason = "non-finite one-step samples";
    rep.budget = ledger;
    return rep;
  }
  fill_common_metrics(cfg, in, samples, rep);
  if (holdout && holdout->size() > 0) {
    rep.mean_angular_error = coupling_angular_error(
        *holdout,
        [&](const Tensor& z) { return model.velocity_at(z, 1.0, nullptr); });
    Rng lip_rng = Rng(cfg.seed).derive(streams::kEval + 29);
    rep.lipschitz_estimate = empirical_lipschitz(*holdout, 2000, lip_rng);
  }
  Tensor sub = eval_subset(in.prior_draws, 256);
  rep.straightness = straightness_deviation(model, sub, cfg.stage2.steps);
  rep.budget = ledger;
  if (samples_out) *samples_out = std::move(samples);
  return rep;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Energy distance of a snapshot's one-step samples, on a capped subset of
// the shared eval draws. Diagnostic only; not charged to any ledger.
constexpr std::size_t kCurveEvalCap = 2048;

double snapshot_energy(const Tensor& samples, const EvalInputs& in,
                       std::uint64_t seed) {
  Tensor tgt = eval_subset(in.target_draws, kCurveEvalCap);
  Rng rng = Rng(seed).derive(streams::kEval + 41);
  return energy_distance(samples, tgt, &rng);
}

Tensor flow_one_step(const FlowModel& m, const Tensor& z) {
  Tensor v = m.velocity_at(z, 1.0, nullptr);
  Tensor x = z;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) x.at(i, j) -= v.at(i, j);
  return x;
}

// Forward-equivalent cost of one training step, in forward passes per batch
// row: flow = forward + backward(2); meanflow adds a JVP (2 more).
constexpr double kFlowStepFwdEq = 3.0;
constexpr double kMeanFlowStepFwdEq = 5.0;

struct Curve {
  std::vector<double> fwd, energy;
};

}  // namespace

ComparisonResult run_comparison(const RunConfig& cfg,
                                const std::vector<std::uint64_t>& seeds,
                                const std::string& out_dir,
                                std::size_t workers) {
  cfg.validate();
  if (seeds.empty()) fail("compare: need at least one seed");
  ComparisonResult result;
  BudgetLedger run_total;
  run_total.flops_per_forward = cfg.flops_per_forward;

  std::optional<RunPaths> paths;
  if (!out_dir.empty()) paths = RunPaths::create(out_dir);

  std::size_t curve_every1 =
      std::max<std::size_t>(1, cfg.stage1.iters / cfg.compare.curve_points);
  std::size_t curve_every3 =
      std::max<std::size_t>(1, cfg.stage3.iters / cfg.compare.curve_points);
  std::size_t scratch_iters = cfg.stage1.iters + cfg.stage3.iters;
  std::size_t curve_every_s =
      std::max<std::size_t>(1, scratch_iters / cfg.compare.curve_points);

  for (std::uint64_t seed : seeds) {
    RunConfig scfg = cfg;
    scfg.seed = seed;
    SeedOutcome outcome;
    outcome.seed = seed;

    Rng eval_rng = Rng(seed).derive(streams::kEval);
    EvalInputs eval = make_eval_inputs(scfg, eval_rng);
    Tensor curve_prior = eval_subset(eval.prior_draws, kCurveEvalCap);

    // Shared stage 1 + 2 for the two two-stage methods. Curve snapshots of
    // the in-progress velocity model use 1-step euler sampling.
    BudgetLedger shared12;
    shared12.flops_per_forward = cfg.flops_per_forward;
    Curve stage1_curve;
    bool shared_ok = true;
    std::string shared_reason;
    FlowModel flow1;
    Stage2Result stage2;
    double shared_fwd = 0.0;
    try {
      if (scfg.stage1.iters == 0) fail("stage1: iters must be > 0");
      Rng rng1 = Rng(seed).derive(streams::kStage1);
      IndependentCouplings source1(scfg.task);
      FlowTrainConfig fc = make_flow_train_config(scfg);
      fc.snapshot_every = curve_every1;
      fc.snapshot_cb = [&](const FlowModel& m, std::size_t step) {
        Tensor s = flow_one_step(m, curve_prior);
        if (!s.all_finite()) return;
        stage1_curve.fwd.push_back(static_cast<double>(step) *
                                   static_cast<double>(fc.batch) *
                                   kFlowStepFwdEq);
        stage1_curve.energy.push_back(snapshot_energy(s, eval, seed));
      };
      FlowTrainResult r1 = train_rectified_flow(source1, fc, rng1, &shared12,
                                                Phase::kStage1Train);
      flow1 = std::move(r1.model);
      stage2 = run_stage2(scfg, flow1, shared12, workers);
      shared_fwd =
          static_cast<double>(scfg.stage1.iters) *
              static_cast<double>(scfg.stage1.batch) * kFlowStepFwdEq +
          static_cast<double>(
              shared12.forward_evals[static_cast<int>(Phase::kReflowSampling)]);
    } catch (const Error& e) {
      shared_ok = false;
      shared_reason = e.what();
    }

    // Re-MeanFlow: stage 3 on the truncated couplings.
    {
      MethodOutcome mo;
      mo.mode = ComparisonMode::kReMeanFlow;
      mo.curve_fwd = stage1_curve.fwd;
      mo.curve_energy = stage1_curve.energy;
      try {
        if (!shared_ok) fail(shared_reason);
        BudgetLedger ledger = shared12;
        if (scfg.stage3.iters == 0) fail("stage3: iters must be > 0");
        Rng rng3 = Rng(seed).derive(streams::kStage3);
        DatasetCouplings source3(stage2.truncated);
        MeanFlowTrainConfig mc = make_meanflow_train_config(
            scfg, scfg.stage3.velocity_source == VelocitySource::kFrozenFlow
                      ? &flow1
                      : nullptr);
        mc.snapshot_every = curve_every3;
        mc.snapshot_cb = [&](const MeanFlowModel& m, std::size_t step) {
          Tensor s = one_step_sample(m, curve_prior, nullptr, nullptr);
          if (!s.all_finite()) return;
          mo.curve_fwd.push_back(shared_fwd +
                                 static_cast<double>(step) *
                                     static_cast<double>(mc.batch) *
                                     kMeanFlowStepFwdEq);
          mo.curve_energy.push_back(snapshot_energy(s, eval, seed));
        };
        MeanFlowTrainResult r3 =
            train_meanflow(source3, mc, rng3, &ledger, Phase::kStage3Train);
        mo.report = evaluate_meanflow(scfg, r3.model, eval, ledger,
                                      &stage2.truncated, &flow1, &mo.samples);
        if (paths && seed == seeds.front()) {
          std::string hash = config_hash(scfg);
          save_flow_checkpoint(
              (fs::path(paths->checkpoints) / "flow_stage1.json").string(),
              flow1, hash);
          save_meanflow_checkpoint(
              (fs::path(paths->checkpoints) / "meanflow_stage3.json").string(),
              r3.model, hash);
          save_couplings(
              (fs::path(paths->couplings) / "reflow_raw.rmfc").string(),
              stage2.raw);
          save_couplings(
              (fs::path(paths->couplings) / "reflow_truncated.rmfc").string(),
              stage2.truncated);
        }
      } catch (const Error& e) {
        mo.report.failed = true;
        mo.report.failure_reason = e.what();
      }
      mo.report.method = "re_meanflow";
      outcome.methods.push_back(std::move(mo));
    }

    // 2-rectified baseline: fresh velocity model on the untruncated reflow
    // couplings, sampled with 1-step euler.
    {
      MethodOutcome mo;
      mo.mode = ComparisonMode::kTwoRectified;
      mo.curve_fwd = stage1_curve.fwd;
      mo.curve_energy = stage1_curve.energy;
      try {
        if (!shared_ok) fail(shared_reason);
        BudgetLedger ledger = shared12;
        if (scfg.stage3.iters == 0) fail("second stage: iters must be > 0");
        Rng rng2 = Rng(seed).derive(streams::kSecondFlow);
        DatasetCouplings source2(stage2.raw);
        FlowTrainConfig fc = make_flow_train_config(scfg);
        fc.iters = scfg.stage3.iters;
        fc.batch = scfg.stage3.batch;
        fc.snapshot_every = curve_every3;
        fc.snapshot_cb = [&](const FlowModel& m, std::size_t step) {
          Tensor s = flow_one_step(m, curve_prior);
          if (!s.all_finite()) return;
          mo.curve_fwd.push_back(shared_fwd +
                                 static_cast<double>(step) *
                                     static_cast<double>(fc.batch) *
                                     kFlowStepFwdEq);
          mo.curve_energy.push_back(snapshot_energy(s, eval, seed));
        };
        FlowTrainResult r2 = train_rectified_flow(source2, fc, rng2, &ledger,
                                                  Phase::kStage3Train);
        mo.report = evaluate_flow_one_step(scfg, r2.model, eval, ledger,
                                           &stage2.raw, &mo.samples);
        if (paths && seed == seeds.front())
          save_flow_checkpoint(
              (fs::path(paths->checkpoints) / "flow_second.json").string(),
              r2.model, config_hash(scfg));
      } catch (const Error& e) {
        mo.report.failed = true;
        mo.report.failure_reason = e.what();
      }
      mo.report.method = "two_rectified";
      outcome.methods.push_back(std::move(mo));
    }

    // MeanFlow from scratch on independent couplings, full budget, no
    // reflow cost charged.
    {
      MethodOutcome mo;
      mo.mode = ComparisonMode::kMeanFlowScratch;
      try {
        BudgetLedger ledger;
        ledger.flops_per_forward = cfg.flops_per_forward;
        if (scratch_iters == 0) fail("scratch: iters must be > 0");
        Rng rngs = Rng(seed).derive(streams::kScratch);
        IndependentCouplings sources(scfg.task);
        MeanFlowTrainConfig mc = make_meanflow_train_config(scfg, nullptr);
        mc.iters = scratch_iters;
        mc.velocity_source = VelocitySource::kConditional;
        mc.frozen_flow = nullptr;
        mc.snapshot_every = curve_every_s;
        mc.snapshot_cb = [&](const MeanFlowModel& m, std::size_t step) {
          Tensor s = one_step_sample(m, curve_prior, nullptr, nullptr);
          if (!s.all_finite()) return;
          mo.curve_fwd.push_back(static_cast<double>(step) *
                                 static_cast<double>(mc.batch) *
                                 kMeanFlowStepFwdEq);
          mo.curve_energy.push_back(snapshot_energy(s, eval, seed));
        };
        MeanFlowTrainResult rs =
            train_meanflow(sources, mc, rngs, &ledger, Phase::kStage3Train);
        mo.report = evaluate_meanflow(scfg, rs.model, eval, ledger, nullptr,
                                      nullptr, &mo.samples);
        if (paths && seed == seeds.front())
          save_meanflow_checkpoint(
              (fs::path(paths->checkpoints) / "meanflow_scratch.json")
                  .string(),
              rs.model, config_hash(scfg));
      } catch (const Error& e) {
        mo.report.failed = true;
        mo.report.failure_reason = e.what();
      }
      mo.report.method = "meanflow_scratch";
      outcome.methods.push_back(std::move(mo));
    }

    for (const auto& mo : outcome.methods) run_total.merge(mo.report.budget);
    result.seeds.push_back(std::move(outcome));
  }

  for (int m = 0; m < 3; ++m) {
    std::vector<double> outliers, energies;
    for (const auto& so : result.seeds) {
      const auto& rep = so.methods[static_cast<std::size_t>(m)].report;
      if (rep.failed) continue;
      outliers.push_back(rep.outlier_rate);
      energies.push_back(rep.energy_distance);
    }
    result.median_outlier_rate[static_cast<std::size_t>(m)] = median(outliers);
    result.median_energy_distance[static_cast<std::size_t>(m)] =
        median(energies);
  }

  if (paths) {
    save_run_config((fs::path(paths->root) / "config.json").string(), cfg);

    std::ofstream sum((fs::path(paths->reports) / "summary.csv").string());
    sum << "seed,method,failed,outlier_rate,energy_distance,"
           "mean_angular_error,straightness,lipschitz\n";
    for (const auto& so : result.seeds)
      for (const auto& mo : so.methods) {
        const EvalReport& r = mo.report;
        sum << so.seed << "," << comparison_mode_name(mo.mode) << ","
            << (r.failed ? 1 : 0) << "," << r.outlier_rate << ","
            << r.energy_distance << "," << r.mean_angular_error << ","
            << r.straightness << "," << r.lipschitz_estimate << "\n";
      }
    sum.close();

    for (const auto& so : result.seeds)
      for (const auto& mo : so.methods) {
        std::string name = comparison_mode_name(mo.mode) + "_seed" +
                           std::to_string(so.seed) + ".txt";
        save_eval_report((fs::path(paths->reports) / name).string(),
                         mo.report);
      }

    std::ofstream curve(
        (fs::path(paths->reports) / "budget_curve.csv").string());
    curve << "seed,method,forward_equivalents,energy_distance\n";
    for (const auto& so : result.seeds)
      for (const auto& mo : so.methods)
        for (std::size_t i = 0; i < mo.curve_fwd.size(); ++i)
          curve << so.seed << "," << comparison_mode_name(mo.mode) << ","
                << mo.curve_fwd[i] << "," << mo.curve_energy[i] << "\n";
    curve.close();

    const SeedOutcome& first = result.seeds.front();
    const char* colors[3] = {"#d62728", "#1f77b4", "#2ca02c"};
    std::vector<CurveSeries> cs;
    for (std::size_t m = 0; m < first.methods.size(); ++m) {
      const auto& mo = first.methods[m];
      if (mo.curve_fwd.empty()) continue;
      cs.push_back({comparison_mode_name(mo.mode), colors[m], mo.curve_fwd,
                    mo.curve_energy});
    }
    if (!cs.empty())
      write_curve_svg(
          (fs::path(paths->figures) / "budget_curve.svg").string(), cs,
          "energy distance vs training forward-equivalents",
          "forward-equivalents", "energy distance");

    Rng eval_rng = Rng(first.seed).derive(streams::kEval);
    RunConfig fcfg = cfg;
    fcfg.seed = first.seed;
    EvalInputs eval = make_eval_inputs(fcfg, eval_rng);
    for (std::size_t m = 0; m < first.methods.size(); ++m) {
      const auto& mo = first.methods[m];
      if (mo.report.failed || mo.samples.rows() == 0) continue;
      std::vector<ScatterSeries> ss = {
          {"target", "#bbbbbb", &eval.target_draws},
          {comparison_mode_name(mo.mode), colors[m], &mo.samples}};
      write_scatter_svg((fs::path(paths->figures) /
                         ("samples_" + comparison_mode_name(mo.mode) + ".svg"))
                            .string(),
                        ss, "one-step samples vs target");
    }

    write_manifest(cfg, out_dir, run_total);
  }

  return result;
}

void write_manifest(const RunConfig& cfg, const std::string& out_dir,
                    const BudgetLedger& budget, bool failed,
                    const std::string& failure_reason) {
  json doc;
  doc["manifest_version"] = 1;
  doc["config_hash"] = config_hash(cfg);
  doc["failed"] = failed;
  if (failed) doc["failure_reason"] = failure_reason;

  json files = json::object();
  std::vector<std::string> rels;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string rel =
        fs::relative(entry.path(), out_dir).generic_string();
    if (rel == "manifest.json") continue;
    rels.push_back(rel);
  }
  std::sort(rels.begin(), rels.end());
  for (const auto& rel : rels)
    files[rel] = file_digest((fs::path(out_dir) / rel).string());
  doc["files"] = std::move(files);

  json phases = json::object();
  for (int p = 0; p < kNumPhases; ++p)
    phases[phase_name(static_cast<Phase>(p))] = {
        {"forward_evals", budget.forward_evals[p]},
        {"train_steps", budget.train_steps[p]}};
  doc["budget"] = {{"flops_per_forward", budget.flops_per_forward},
                   {"phases", std::move(phases)},
                   {"total_forward_evals", budget.total_forward_evals()},
                   {"total_train_steps", budget.total_train_steps()}};

  std::time_t now = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  char ts[32];
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(ts, sizeof(ts), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  doc["timestamp"] = ts;

  std::ofstream out((fs::path(out_dir) / "manifest.json").string());
  if (!out) fail("pipeline: cannot write manifest in '" + out_dir + "'");
  out << doc.dump(1) << "\n";
}

nlohmann::json load_manifest(const std::string& out_dir) {
  std::string path = (fs::path(out_dir) / "manifest.json").string();
  std::ifstream in(path);
  if (!in) fail("pipeline: cannot open '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    fail("pipeline: manifest parse error: " + std::string(e.what()));
  }
  return doc;
}

}  // namespace rmf
