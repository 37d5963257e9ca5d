#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "remeanflow/pipeline.hpp"
#include "remeanflow/svg.hpp"
#include "remeanflow/util.hpp"

namespace fs = std::filesystem;
using namespace rmf;

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iters;
  std::optional<double> truncate_k;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "Run configuration file (JSON)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Master seed override");
  cmd->add_option("--iters", o.iters,
                  "Training iteration override for the trained stage");
  cmd->add_option("--truncate-k", o.truncate_k,
                  "Coupling truncation percentile override (0 disables)");
  cmd->add_option("--out", o.out, "Output directory override");
}

RunConfig resolve_config(const CommonOpts& o) {
  RunConfig cfg =
      o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.truncate_k) cfg.stage2.truncate_k = *o.truncate_k;
  if (o.out) cfg.out_dir = *o.out;
  cfg.validate();
  return cfg;
}

void write_loss_csv(const std::string& path,
                    const std::vector<double>& trace) {
  std::ofstream out(path);
  if (!out) fail("cannot open '" + path + "' for writing");
  out << "step,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    out << i + 1 << "," << trace[i] << "\n";
}

int cmd_train_flow(const CommonOpts& o) {
  RunConfig cfg = resolve_config(o);
  if (o.iters) cfg.stage1.iters = *o.iters;
  RunPaths paths = RunPaths::create(cfg.out_dir);
  BudgetLedger ledger;
  try {
    Stage1Result r = run_stage1(cfg, ledger);
    save_flow_checkpoint(
        (fs::path(paths.checkpoints) / "flow_stage1.json").string(), r.model,
        config_hash(cfg));
    write_loss_csv((fs::path(paths.reports) / "stage1_loss.csv").string(),
                   r.loss_trace);
    save_run_config((fs::path(paths.root) / "config.json").string(), cfg);
    write_manifest(cfg, cfg.out_dir, ledger);
  } catch (const Error& e) {
    write_manifest(cfg, cfg.out_dir, ledger, true, e.what());
    throw;
  }
  std::cout << "trained velocity model: " << cfg.stage1.iters << " steps -> "
            << paths.checkpoints << "/flow_stage1.json\n";
  return 0;
}

int cmd_reflow(const CommonOpts& o, const std::string& flow_path) {
  RunConfig cfg = resolve_config(o);
  RunPaths paths = RunPaths::create(cfg.out_dir);
  std::string fp = flow_path.empty()
                       ? (fs::path(paths.checkpoints) / "flow_stage1.json")
                             .string()
                       : flow_path;
  FlowModel flow = load_flow_checkpoint(fp);
  BudgetLedger ledger;
  Stage2Result r = run_stage2(cfg, flow, ledger, o.workers.value_or(1));
  save_couplings((fs::path(paths.couplings) / "reflow_raw.rmfc").string(),
                 r.raw);
  save_couplings(
      (fs::path(paths.couplings) / "reflow_truncated.rmfc").string(),
      r.truncated);
  export_couplings_csv(
      (fs::path(paths.couplings) / "reflow_truncated.csv").string(),
      r.truncated);
  write_manifest(cfg, cfg.out_dir, ledger);
  std::cout << "generated " << r.raw.size() << " couplings, kept "
            << r.truncated.size() << " after top-" << cfg.stage2.truncate_k
            << "% truncation (" << r.failed_pairs << " failed pairs)\n";
  return 0;
}

int cmd_train_meanflow(const CommonOpts& o, const std::string& couplings_path,
                       const std::string& flow_path) {
  RunConfig cfg = resolve_config(o);
  if (o.iters) cfg.stage3.iters = *o.iters;
  RunPaths paths = RunPaths::create(cfg.out_dir);
  std::string cp =
      couplings_path.empty()
          ? (fs::path(paths.couplings) / "reflow_truncated.rmfc").string()
          : couplings_path;
  CouplingSet set = load_couplings(cp);
  std::optional<FlowModel> frozen;
  if (cfg.stage3.velocity_source == VelocitySource::kFrozenFlow) {
    std::string fp = flow_path.empty()
                         ? (fs::path(paths.checkpoints) / "flow_stage1.json")
                               .string()
                         : flow_path;
    frozen = load_flow_checkpoint(fp);
  }
  BudgetLedger ledger;
  try {
    Stage3Result r =
        run_stage3(cfg, set, frozen ? &*frozen : nullptr, ledger);
    save_meanflow_checkpoint(
        (fs::path(paths.checkpoints) / "meanflow_stage3.json").string(),
        r.model, config_hash(cfg));
    write_loss_csv((fs::path(paths.reports) / "stage3_loss.csv").string(),
                   r.loss_trace);
    write_manifest(cfg, cfg.out_dir, ledger);
  } catch (const Error& e) {
    write_manifest(cfg, cfg.out_dir, ledger, true, e.what());
    throw;
  }
  std::cout << "trained mean-velocity model: " << cfg.stage3.iters
            << " steps on " << set.size() << " couplings -> "
            << paths.checkpoints << "/meanflow_stage3.json\n";
  return 0;
}

int cmd_sample(const CommonOpts& o, const std::string& model_path,
               std::size_t n) {
  RunConfig cfg = resolve_config(o);
  RunPaths paths = RunPaths::create(cfg.out_dir);
  std::string mp = model_path.empty()
                       ? (fs::path(paths.checkpoints) / "meanflow_stage3.json")
                             .string()
                       : model_path;
  MeanFlowModel model = load_meanflow_checkpoint(mp);
  Rng rng = Rng(cfg.seed).derive(streams::kEval);
  Tensor z = sample_mixture(cfg.task.prior(), n, rng);
  BudgetLedger ledger;
  ledger.flops_per_forward = cfg.flops_per_forward;
  Tensor x = one_step_sample(model, z, nullptr, &ledger);
  std::string csv = (fs::path(paths.reports) / "samples.csv").string();
  std::ofstream out(csv);
  if (!out) fail("cannot open '" + csv + "' for writing");
  out << "x0,x1\n";
  for (std::size_t i = 0; i < x.rows(); ++i)
    out << x.at(i, 0) << "," << x.at(i, 1) << "\n";
  out.close();
  Tensor target = sample_mixture(cfg.task.target, n, rng);
  std::vector<ScatterSeries> ss = {{"target", "#bbbbbb", &target},
                                   {"one-step samples", "#d62728", &x}};
  write_scatter_svg((fs::path(paths.figures) / "samples.svg").string(), ss,
                    "one-step samples vs target");
  std::cout << "wrote " << n << " one-step samples to " << csv << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& model_path,
             const std::string& couplings_path) {
  RunConfig cfg = resolve_config(o);
  RunPaths paths = RunPaths::create(cfg.out_dir);
  std::string mp = model_path.empty()
                       ? (fs::path(paths.checkpoints) / "meanflow_stage3.json")
                             .string()
                       : model_path;
  MeanFlowModel model = load_meanflow_checkpoint(mp);
  std::optional<CouplingSet> holdout;
  if (!couplings_path.empty()) holdout = load_couplings(couplings_path);
  Rng eval_rng = Rng(cfg.seed).derive(streams::kEval);
  EvalInputs in = make_eval_inputs(cfg, eval_rng);
  BudgetLedger ledger;
  ledger.flops_per_forward = cfg.flops_per_forward;
  EvalReport rep = evaluate_meanflow(cfg, model, in, ledger,
                                     holdout ? &*holdout : nullptr, nullptr);
  std::string rp = (fs::path(paths.reports) / "eval.txt").string();
  save_eval_report(rp, rep);
  std::cout << "outlier_rate=" << rep.outlier_rate
            << " energy_distance=" << rep.energy_distance << " -> " << rp
            << "\n";
  return 0;
}

int cmd_compare(const CommonOpts& o, std::size_t num_seeds) {
  RunConfig cfg = resolve_config(o);
  if (o.iters) {
    cfg.stage1.iters = *o.iters;
    cfg.stage3.iters = *o.iters;
  }
  if (num_seeds == 0) fail("compare: need at least one seed");
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < num_seeds; ++i) seeds.push_back(cfg.seed + i);
  ComparisonResult res =
      run_comparison(cfg, seeds, cfg.out_dir, o.workers.value_or(1));
  for (int m = 0; m < 3; ++m)
    std::cout << comparison_mode_name(static_cast<ComparisonMode>(m))
              << ": median outlier_rate="
              << res.median_outlier_rate[static_cast<std::size_t>(m)]
              << " median energy_distance="
              << res.median_energy_distance[static_cast<std::size_t>(m)]
              << "\n";
  return 0;
}

int cmd_heatmap(const CommonOpts& o, const std::string& model_path,
                const std::string& couplings_path, std::size_t grid,
                std::size_t draws) {
  RunConfig cfg = resolve_config(o);
  RunPaths paths = RunPaths::create(cfg.out_dir);
  std::string mp = model_path.empty()
                       ? (fs::path(paths.checkpoints) / "meanflow_stage3.json")
                             .string()
                       : model_path;
  std::string cp =
      couplings_path.empty()
          ? (fs::path(paths.couplings) / "reflow_truncated.rmfc").string()
          : couplings_path;
  MeanFlowModel model = load_meanflow_checkpoint(mp);
  CouplingSet set = load_couplings(cp);
  Rng rng = Rng(cfg.seed).derive(streams::kEval + 3);
  LossHeatmap hm = loss_heatmap(model, set, grid, draws, rng);
  export_heatmap_csv((fs::path(paths.reports) / "heatmap.csv").string(), hm);
  write_heatmap_svg((fs::path(paths.figures) / "heatmap.svg").string(), hm,
                    "regression error over (t, r)");
  std::cout << "wrote " << grid << "x" << grid << " heatmap from " << draws
            << " draws\n";
  return 0;
}

int cmd_budget(const CommonOpts& o) {
  RunConfig cfg = resolve_config(o);
  double f = cfg.flops_per_forward;
  double s1 = train_flops(static_cast<double>(cfg.stage1.iters),
                          static_cast<double>(cfg.stage1.batch), 3.0, f);
  double s2 = sample_flops(static_cast<double>(cfg.stage2.n_pairs),
                           static_cast<double>(cfg.stage2.steps),
                           cfg.stage2.solver == Solver::kHeun ? 2.0 : 1.0, f);
  double s3 = train_flops(static_cast<double>(cfg.stage3.iters),
                          static_cast<double>(cfg.stage3.batch), 5.0, f);
  std::cout << "flops_per_forward=" << f << "\n"
            << "stage1_train_flops=" << s1 << "\n"
            << "stage2_reflow_flops=" << s2 << "\n"
            << "stage3_train_flops=" << s3 << "\n"
            << "total_flops=" << s1 + s2 + s3 << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Two-stage rectified-flow / mean-flow toy laboratory: train, reflow, "
      "truncate, retrain, and compare one-step samplers under matched "
      "compute budgets."};
  app.require_subcommand(1);

  CommonOpts o;
  std::string flow_path, couplings_path, model_path;
  std::size_t n_samples = 4096, num_seeds = 5, grid = 20, draws = 100000;

  auto* tf = app.add_subcommand("train-flow",
                                "Train the stage-1 velocity model");
  add_common(tf, o);

  auto* rf = app.add_subcommand(
      "reflow", "Generate and truncate couplings from a velocity model");
  add_common(rf, o);
  rf->add_option("--flow", flow_path, "Velocity model checkpoint path");
  rf->add_option("--workers", o.workers, "Coupling generation worker threads");

  auto* tm = app.add_subcommand("train-meanflow",
                                "Train the mean-velocity model on couplings");
  add_common(tm, o);
  tm->add_option("--couplings", couplings_path, "Coupling file path");
  tm->add_option("--flow", flow_path,
                 "Frozen velocity checkpoint (frozen_flow source only)");

  auto* sp = app.add_subcommand("sample",
                                "One-step sampling from a mean-velocity model");
  add_common(sp, o);
  sp->add_option("--model", model_path, "Mean-velocity checkpoint path");
  sp->add_option("--n", n_samples, "Number of samples");

  auto* ev = app.add_subcommand("eval",
                                "Metric battery for a mean-velocity model");
  add_common(ev, o);
  ev->add_option("--model", model_path, "Mean-velocity checkpoint path");
  ev->add_option("--couplings", couplings_path,
                 "Holdout couplings for angular/lipschitz diagnostics");

  auto* cp = app.add_subcommand(
      "compare", "Three-method comparison under matched budgets");
  add_common(cp, o);
  cp->add_option("--num-seeds", num_seeds, "Consecutive master seeds to run");
  cp->add_option("--workers", o.workers, "Coupling generation worker threads");

  auto* hm = app.add_subcommand("heatmap",
                                "Regression-error heatmap over (t, r)");
  add_common(hm, o);
  hm->add_option("--model", model_path, "Mean-velocity checkpoint path");
  hm->add_option("--couplings", couplings_path, "Coupling file path");
  hm->add_option("--grid", grid, "Cells per axis");
  hm->add_option("--draws", draws, "Uniform (t, r) draws");

  auto* bd = app.add_subcommand("budget",
                                "Print the configured FLOPs breakdown");
  add_common(bd, o);

  try {
    app.parse(argc, argv);
    if (tf->parsed()) return cmd_train_flow(o);
    if (rf->parsed()) return cmd_reflow(o, flow_path);
    if (tm->parsed()) return cmd_train_meanflow(o, couplings_path, flow_path);
    if (sp->parsed()) return cmd_sample(o, model_path, n_samples);
    if (ev->parsed()) return cmd_eval(o, model_path, couplings_path);
    if (cp->parsed()) return cmd_compare(o, num_seeds);
    if (hm->parsed()) return cmd_heatmap(o, model_path, couplings_path, grid,
                                         draws);
    if (bd->parsed()) return cmd_budget(o);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    return e.get_exit_code() ? e.get_exit_code() : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
