#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "remeanflow/pipeline.hpp"
#include "remeanflow/util.hpp"

using namespace rmf;
namespace fs = std::filesystem;

namespace {

// Small enough to train in well under a second per stage.
RunConfig tiny_config() {
  RunConfig cfg;
  cfg.seed = 5;
  cfg.net.hidden = {16, 16};
  cfg.stage1.iters = 60;
  cfg.stage1.batch = 64;
  cfg.stage2.n_pairs = 2000;
  cfg.stage2.steps = 8;
  cfg.stage3.iters = 60;
  cfg.stage3.batch = 64;
  cfg.compare.n_eval = 400;
  cfg.compare.curve_points = 3;
  return cfg;
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config json round trip") {
  RunConfig cfg = tiny_config();
  cfg.stage2.truncate_k = 7.5;
  cfg.stage3.guidance = CfgConfig{};
  cfg.conditional = true;
  cfg.task.class_labels = {0, 1};
  nlohmann::json j = run_config_to_json(cfg);
  RunConfig back = run_config_from_json(j);
  CHECK(back.seed == cfg.seed);
  CHECK(back.stage2.truncate_k == 7.5);
  CHECK(back.net.hidden == cfg.net.hidden);
  CHECK(back.stage3.guidance.has_value());
  CHECK(back.task.class_labels == cfg.task.class_labels);
  CHECK(config_hash(back) == config_hash(cfg));
}

TEST_CASE("unknown config keys are hard errors") {
  nlohmann::json j = run_config_to_json(tiny_config());
  j["surprise"] = 1;
  CHECK_THROWS_AS(run_config_from_json(j), Error);
  j.erase("surprise");
  j["stage2"]["truncat_k"] = 5.0;  // typo must not pass silently
  CHECK_THROWS_AS(run_config_from_json(j), Error);
  j["stage2"].erase("truncat_k");
  j["stage3"]["time_sampler"]["u_shape"] = 2.0;
  CHECK_THROWS_AS(run_config_from_json(j), Error);
}

TEST_CASE("schema version mismatch is rejected") {
  nlohmann::json j = run_config_to_json(tiny_config());
  j["schema_version"] = 999;
  CHECK_THROWS_AS(run_config_from_json(j), Error);
  j.erase("schema_version");
  CHECK_THROWS_AS(run_config_from_json(j), Error);
}

TEST_CASE("config hash tracks content") {
  RunConfig a = tiny_config();
  RunConfig b = tiny_config();
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 6;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("stage1 determinism produces byte-identical checkpoints") {
  RunConfig cfg = tiny_config();
  BudgetLedger l1, l2;
  Stage1Result a = run_stage1(cfg, l1);
  Stage1Result b = run_stage1(cfg, l2);
  fs::path pa = temp_dir("rmf_s1_a.json"), pb = temp_dir("rmf_s1_b.json");
  save_flow_checkpoint(pa.string(), a.model, config_hash(cfg));
  save_flow_checkpoint(pb.string(), b.model, config_hash(cfg));
  CHECK(file_digest(pa.string()) == file_digest(pb.string()));
  CHECK(l1.train_steps[static_cast<int>(Phase::kStage1Train)] == 60);
  // Convergence sanity on the tiny budget: later losses beat early ones on
  // average (single steps are too noisy to compare).
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    head += a.loss_trace[i];
    tail += a.loss_trace[a.loss_trace.size() - 1 - i];
  }
  CHECK(tail < head);
  fs::remove(pa);
  fs::remove(pb);
}

TEST_CASE("zero-iteration budgets are errors") {
  RunConfig cfg = tiny_config();
  cfg.stage1.iters = 0;
  BudgetLedger ledger;
  CHECK_THROWS_AS(run_stage1(cfg, ledger), Error);
  RunConfig cfg3 = tiny_config();
  cfg3.stage3.iters = 0;
  BudgetLedger l1;
  Stage1Result s1 = run_stage1(tiny_config(), l1);
  Stage2Result s2 = run_stage2(tiny_config(), s1.model, l1);
  CHECK_THROWS_AS(run_stage3(cfg3, s2.truncated, nullptr, l1), Error);
}

TEST_CASE("stage2 truncation arithmetic and worker invariance") {
  RunConfig cfg = tiny_config();
  cfg.stage2.n_pairs = 10000;
  cfg.stage2.truncate_k = 10.0;
  cfg.stage2.block_size = 512;
  BudgetLedger ledger;
  Stage1Result s1 = run_stage1(cfg, ledger);
  Stage2Result a = run_stage2(cfg, s1.model, ledger);
  CHECK(a.raw.size() == 10000);
  CHECK(a.truncated.size() == 9000);
  CHECK(a.truncated.provenance.truncated);
  CHECK(!a.raw.provenance.truncated);
  CHECK(a.raw.provenance.generator_checkpoint == config_hash(cfg));

  BudgetLedger wl;
  Stage2Result b = run_stage2(cfg, s1.model, wl, 4);
  fs::path pa = temp_dir("rmf_cp_a.rmfc"), pb = temp_dir("rmf_cp_b.rmfc");
  save_couplings(pa.string(), a.raw);
  save_couplings(pb.string(), b.raw);
  CHECK(file_digest(pa.string()) == file_digest(pb.string()));
  fs::remove(pa);
  fs::remove(pb);

  RunConfig k0 = cfg;
  k0.stage2.truncate_k = 0.0;
  BudgetLedger l0;
  Stage2Result c = run_stage2(k0, s1.model, l0);
  CHECK(c.truncated.size() == c.raw.size());
}

TEST_CASE("stage3 trains on stage2 couplings deterministically") {
  RunConfig cfg = tiny_config();
  BudgetLedger ledger;
  Stage1Result s1 = run_stage1(cfg, ledger);
  Stage2Result s2 = run_stage2(cfg, s1.model, ledger);
  Stage3Result a = run_stage3(cfg, s2.truncated, nullptr, ledger);
  BudgetLedger l2;
  Stage3Result b = run_stage3(cfg, s2.truncated, nullptr, l2);
  fs::path pa = temp_dir("rmf_s3_a.json"), pb = temp_dir("rmf_s3_b.json");
  save_meanflow_checkpoint(pa.string(), a.model, config_hash(cfg));
  save_meanflow_checkpoint(pb.string(), b.model, config_hash(cfg));
  CHECK(file_digest(pa.string()) == file_digest(pb.string()));
  CHECK(a.loss_trace.size() == cfg.stage3.iters);
  fs::remove(pa);
  fs::remove(pb);
}

TEST_CASE("checkpoint kinds are enforced") {
  RunConfig cfg = tiny_config();
  BudgetLedger ledger;
  Stage1Result s1 = run_stage1(cfg, ledger);
  fs::path p = temp_dir("rmf_kind.json");
  save_flow_checkpoint(p.string(), s1.model, "x");
  CHECK_THROWS_AS(load_meanflow_checkpoint(p.string()), Error);
  FlowModel back = load_flow_checkpoint(p.string());
  CHECK(back.data_dim == 2);
  fs::remove(p);
}

TEST_CASE("comparison writes a complete manifest and is reproducible") {
  RunConfig cfg = tiny_config();
  fs::path out1 = temp_dir("rmf_cmp1");
  fs::path out2 = temp_dir("rmf_cmp2");
  ComparisonResult r1 = run_comparison(cfg, {5, 6}, out1.string());
  ComparisonResult r2 = run_comparison(cfg, {5, 6}, out2.string());
  REQUIRE(r1.seeds.size() == 2);
  REQUIRE(r1.seeds[0].methods.size() == 3);

  nlohmann::json m1 = load_manifest(out1.string());
  nlohmann::json m2 = load_manifest(out2.string());
  CHECK(m1.at("config_hash") == config_hash(cfg));
  // Every file present on disk is listed, with a matching digest.
  std::size_t disk_files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(out1)) {
    if (!entry.is_regular_file()) continue;
    std::string rel = fs::relative(entry.path(), out1).generic_string();
    if (rel == "manifest.json") continue;
    ++disk_files;
    REQUIRE(m1.at("files").contains(rel));
    CHECK(m1.at("files").at(rel) == file_digest(entry.path().string()));
  }
  CHECK(m1.at("files").size() == disk_files);
  CHECK(disk_files > 0);
  // Re-running the identical config reproduces every digest.
  CHECK(m1.at("files") == m2.at("files"));

  // The ledgers never charge reflow work to the from-scratch method.
  for (const auto& so : r1.seeds) {
    const EvalReport& scratch = so.methods[2].report;
    CHECK(scratch.budget
              .forward_evals[static_cast<int>(Phase::kReflowSampling)] == 0);
    const EvalReport& re = so.methods[0].report;
    CHECK(re.budget
              .forward_evals[static_cast<int>(Phase::kReflowSampling)] ==
          cfg.stage2.n_pairs * cfg.stage2.steps);
  }
  fs::remove_all(out1);
  fs::remove_all(out2);
}

TEST_CASE("comparison worker count does not change artifacts") {
  RunConfig cfg = tiny_config();
  fs::path out1 = temp_dir("rmf_cmpw1");
  fs::path out2 = temp_dir("rmf_cmpw2");
  run_comparison(cfg, {5}, out1.string(), 1);
  run_comparison(cfg, {5}, out2.string(), 4);
  nlohmann::json m1 = load_manifest(out1.string());
  nlohmann::json m2 = load_manifest(out2.string());
  CHECK(m1.at("files") == m2.at("files"));
  CHECK(m1.at("config_hash") == m2.at("config_hash"));
  fs::remove_all(out1);
  fs::remove_all(out2);
}

TEST_CASE("a failing method does not abort the others") {
  RunConfig cfg = tiny_config();
  cfg.stage3.iters = 0;  // sinks the two-stage methods, scratch keeps 60
  ComparisonResult r = run_comparison(cfg, {5});
  REQUIRE(r.seeds.size() == 1);
  CHECK(r.seeds[0].methods[0].report.failed);
  CHECK(r.seeds[0].methods[1].report.failed);
  CHECK(!r.seeds[0].methods[2].report.failed);
  CHECK(!r.seeds[0].methods[0].report.failure_reason.empty());
}

TEST_CASE("eval inputs are seed-deterministic") {
  RunConfig cfg = tiny_config();
  Rng r1 = Rng(5).derive(streams::kEval);
  Rng r2 = Rng(5).derive(streams::kEval);
  EvalInputs a = make_eval_inputs(cfg, r1);
  EvalInputs b = make_eval_inputs(cfg, r2);
  CHECK(a.prior_draws.values == b.prior_draws.values);
  CHECK(a.target_draws.values == b.target_draws.values);
  CHECK(a.outlier_threshold == b.outlier_threshold);
}

TEST_CASE("config file save and load") {
  RunConfig cfg = tiny_config();
  fs::path p = temp_dir("rmf_cfg.json");
  save_run_config(p.string(), cfg);
  RunConfig back = load_run_config(p.string());
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK_THROWS_AS(load_run_config("/nonexistent/rmf.json"), Error);
  std::ofstream bad(p);
  bad << "{ not json";
  bad.close();
  CHECK_THROWS_AS(load_run_config(p.string()), Error);
  fs::remove(p);
}
