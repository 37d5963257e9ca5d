#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "remeanflow/adam.hpp"
#include "remeanflow/flow.hpp"
#include "remeanflow/meanflow.hpp"
#include "remeanflow/mixture.hpp"
#include "remeanflow/timesampler.hpp"

namespace rmf {

inline constexpr int kConfigSchemaVersion = 1;

struct NetConfig {
  std::vector<std::size_t> hidden = {64, 64};
  Activation activation = Activation::kTanh;
};

struct Stage1Config {
  std::size_t iters = 10000;
  std::size_t batch = 1024;
};

struct Stage2Config {
  std::size_t n_pairs = 100000;
  std::size_t steps = 100;
  Solver solver = Solver::kEuler;
  double truncate_k = 10.0;
  std::size_t block_size = 4096;
};

struct Stage3Config {
  std::size_t iters = 10000;
  std::size_t batch = 1024;
  TimeSamplerConfig time;
  double loss_p = 0.5;
  double loss_c = 1e-3;
  VelocitySource velocity_source = VelocitySource::kConditional;
  std::optional<CfgConfig> guidance;
  double class_dropout = 0.1;
};

struct CompareConfig {
  std::size_t n_eval = 8000;
  std::size_t curve_points = 10;
};

enum class ComparisonMode { kReMeanFlow, kTwoRectified, kMeanFlowScratch };

std::string comparison_mode_name(ComparisonMode m);
ComparisonMode comparison_mode_from_name(const std::string& name);

// Full experiment description; everything a run needs, persisted alongside
// the artifacts it produced.
struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  ToyTask task = default_toy_task();
  bool conditional = false;
  NetConfig net;
  AdamConfig adam;
  Stage1Config stage1;
  Stage2Config stage2;
  Stage3Config stage3;
  CompareConfig compare;
  ComparisonMode mode = ComparisonMode::kReMeanFlow;
  double flops_per_forward = 102e9;  // per-forward model cost constant

  void validate() const;
};

nlohmann::json run_config_to_json(const RunConfig& cfg);
// Strict: unknown keys anywhere in the document are hard errors.
RunConfig run_config_from_json(const nlohmann::json& doc);

RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& cfg);

// Digest of the canonical JSON form.
std::string config_hash(const RunConfig& cfg);

}  // namespace rmf
