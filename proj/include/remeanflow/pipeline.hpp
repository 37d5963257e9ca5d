#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "remeanflow/config.hpp"
#include "remeanflow/coupling.hpp"
#include "remeanflow/flow.hpp"
#include "remeanflow/meanflow.hpp"
#include "remeanflow/metrics.hpp"

namespace rmf {

// Per-stage seed streams, derived from the master seed. Stable ids so that
// artifacts do not depend on the order stages are invoked in.
namespace streams {
inline constexpr std::uint64_t kStage1 = 101;
inline constexpr std::uint64_t kStage2 = 102;
inline constexpr std::uint64_t kStage3 = 103;
inline constexpr std::uint64_t kSecondFlow = 104;
inline constexpr std::uint64_t kScratch = 105;
inline constexpr std::uint64_t kEval = 106;
}  // namespace streams

// Output layout under one run directory. create() makes the directories.
struct RunPaths {
  std::string root;
  std::string checkpoints;
  std::string couplings;
  std::string reports;
  std::string figures;

  static RunPaths create(const std::string& out_dir);
};

// Model checkpoints with kind and shape recorded in metadata; loading checks
// the kind matches.
void save_flow_checkpoint(const std::string& path, const FlowModel& model,
                          const std::string& config_digest);
FlowModel load_flow_checkpoint(const std::string& path);
void save_meanflow_checkpoint(const std::string& path,
                              const MeanFlowModel& model,
                              const std::string& config_digest);
MeanFlowModel load_meanflow_checkpoint(const std::string& path);

FlowTrainConfig make_flow_train_config(const RunConfig& cfg);
MeanFlowTrainConfig make_meanflow_train_config(const RunConfig& cfg,
                                               const FlowModel* frozen_flow);

struct Stage1Result {
  FlowModel model;
  std::vector<double> loss_trace;
};

// Velocity model on independent couplings (x ~ target, z ~ prior).
Stage1Result run_stage1(const RunConfig& cfg, BudgetLedger& ledger);

struct Stage2Result {
  CouplingSet raw;        // untruncated, provenance recorded
  CouplingSet truncated;  // distance-truncated at cfg.stage2.truncate_k
  std::size_t failed_pairs = 0;
};

// `workers` is an execution detail, not configuration: any worker count
// produces byte-identical couplings, so it is deliberately kept out of
// RunConfig and the config hash.
Stage2Result run_stage2(const RunConfig& cfg, const FlowModel& flow,
                        BudgetLedger& ledger, std::size_t workers = 1);

struct Stage3Result {
  MeanFlowModel model;
  std::vector<double> loss_trace;
};

// Mean-velocity model on stored couplings. frozen_flow is only consulted
// when cfg.stage3.velocity_source is kFrozenFlow.
Stage3Result run_stage3(const RunConfig& cfg, const CouplingSet& couplings,
                        const FlowModel* frozen_flow, BudgetLedger& ledger);

// Fixed evaluation draws shared across methods so reports are comparable.
struct EvalInputs {
  Tensor prior_draws;   // (n_eval, d)
  Tensor target_draws;  // (n_eval, d)
  std::vector<int> cls;
  double outlier_threshold = 0.0;
};

EvalInputs make_eval_inputs(const RunConfig& cfg, Rng& rng);

// One-step sampling x = z - u(z, 0, 1) plus the standard metric battery.
// `holdout` (may be null) supplies couplings for the angular-error and
// lipschitz diagnostics; `traj_flow` (may be null) is measured for
// trajectory straightness.
EvalReport evaluate_meanflow(const RunConfig& cfg, const MeanFlowModel& model,
                             const EvalInputs& in, BudgetLedger ledger,
                             const CouplingSet* holdout,
                             const FlowModel* traj_flow,
                             Tensor* samples_out = nullptr);

// One-step euler sampling x = z - v(z, 1) for the velocity-model baseline.
EvalReport evaluate_flow_one_step(const RunConfig& cfg, const FlowModel& model,
                                  const EvalInputs& in, BudgetLedger ledger,
                                  const CouplingSet* holdout,
                                  Tensor* samples_out = nullptr);

struct MethodOutcome {
  ComparisonMode mode;
  EvalReport report;
  Tensor samples;                    // (n_eval, d) one-step samples
  std::vector<double> curve_fwd;     // cumulative forward-equivalents
  std::vector<double> curve_energy;  // energy distance at each snapshot
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::vector<MethodOutcome> methods;
};

struct ComparisonResult {
  std::vector<SeedOutcome> seeds;
  // Medians across seeds, indexed by ComparisonMode order.
  std::array<double, 3> median_outlier_rate{};
  std::array<double, 3> median_energy_distance{};
};

// The three-method comparison under matched training budgets: two-stage
// methods split the budget (stage1 + stage3 iters), from-scratch gets the
// sum. Stage 1 and 2 artifacts are shared between the two two-stage methods
// and their cost is charged to both ledgers, never to from-scratch. A method
// failure is recorded in its report; the others still run.
//
// When out_dir is non-empty, writes reports, sample scatters, the
// budget-vs-quality curve and a manifest there.
ComparisonResult run_comparison(const RunConfig& cfg,
                                const std::vector<std::uint64_t>& seeds,
                                const std::string& out_dir = "",
                                std::size_t workers = 1);

// Manifest: config hash, every file under out_dir with a content digest,
// budget snapshot, timestamp. Written to <out_dir>/manifest.json last.
void write_manifest(const RunConfig& cfg, const std::string& out_dir,
                    const BudgetLedger& budget, bool failed = false,
                    const std::string& failure_reason = "");

nlohmann::json load_manifest(const std::string& out_dir);

}  // namespace rmf
