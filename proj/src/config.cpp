#include "remeanflow/config.hpp"

#include <fstream>
#include <set>

#include "remeanflow/util.hpp"

namespace rmf {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& ctx) {
  if (!obj.is_object()) fail("config: " + ctx + " must be an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key))
      fail("config: unknown key '" + key + "' in " + ctx);
}

json mixture_to_json(const GaussianMixture& gm) {
  return {{"weights", gm.weights}, {"means", gm.means}, {"scale", gm.scale}};
}

GaussianMixture mixture_from_json(const json& j, const std::string& ctx) {
  check_keys(j, {"weights", "means", "scale"}, ctx);
  GaussianMixture gm;
  gm.weights = j.at("weights").get<std::vector<double>>();
  gm.means = j.at("means").get<std::vector<std::vector<double>>>();
  gm.scale = j.at("scale").get<double>();
  gm.validate();
  return gm;
}

}  // namespace

std::string comparison_mode_name(ComparisonMode m) {
  switch (m) {
    case ComparisonMode::kReMeanFlow: return "re_meanflow";
    case ComparisonMode::kTwoRectified: return "two_rectified";
    case ComparisonMode::kMeanFlowScratch: return "meanflow_scratch";
  }
  fail("comparison_mode_name: bad mode");
}

ComparisonMode comparison_mode_from_name(const std::string& name) {
  if (name == "re_meanflow") return ComparisonMode::kReMeanFlow;
  if (name == "two_rectified") return ComparisonMode::kTwoRectified;
  if (name == "meanflow_scratch") return ComparisonMode::kMeanFlowScratch;
  fail("unknown comparison mode '" + name + "'");
}

void RunConfig::validate() const {
  if (schema_version != kConfigSchemaVersion)
    fail("RunConfig: unsupported schema_version");
  task.validate();
  if (out_dir.empty()) fail("RunConfig: out_dir must be non-empty");
  if (net.hidden.empty()) fail("RunConfig: need at least one hidden layer");
  if (stage2.truncate_k < 0.0 || stage2.truncate_k >= 100.0)
    fail("RunConfig: truncate_k must be in [0, 100)");
  stage3.time.validate();
  if (stage3.guidance) stage3.guidance->validate();
  if (conditional && task.target.num_components() < 2 &&
      task.class_labels.empty())
    fail("RunConfig: conditional task needs classes");
  if (flops_per_forward <= 0.0)
    fail("RunConfig: flops_per_forward must be > 0");
}

json run_config_to_json(const RunConfig& cfg) {
  json doc;
  doc["schema_version"] = cfg.schema_version;
  doc["seed"] = cfg.seed;
  doc["out_dir"] = cfg.out_dir;
  json task = {{"source", mixture_to_json(cfg.task.source)},
               {"target", mixture_to_json(cfg.task.target)},
               {"prior_is_source", cfg.task.prior_is_source}};
  if (!cfg.task.class_labels.empty())
    task["class_labels"] = cfg.task.class_labels;
  doc["task"] = std::move(task);
  doc["conditional"] = cfg.conditional;
  doc["net"] = {{"hidden", cfg.net.hidden},
                {"activation", activation_name(cfg.net.activation)}};
  doc["optimizer"] = {{"lr", cfg.adam.lr},
                      {"beta1", cfg.adam.beta1},
                      {"beta2", cfg.adam.beta2},
                      {"eps", cfg.adam.eps}};
  doc["stage1"] = {{"iters", cfg.stage1.iters}, {"batch", cfg.stage1.batch}};
  doc["stage2"] = {{"n_pairs", cfg.stage2.n_pairs},
                   {"steps", cfg.stage2.steps},
                   {"solver", solver_name(cfg.stage2.solver)},
                   {"truncate_k", cfg.stage2.truncate_k},
                   {"block_size", cfg.stage2.block_size}};
  json time = {{"u_shape_a", cfg.stage3.time.u_shape_a},
               {"u_shape_enabled", cfg.stage3.time.u_shape_enabled},
               {"interval_mean", cfg.stage3.time.interval_mean},
               {"interval_std", cfg.stage3.time.interval_std},
               {"ratio_r_neq_t", cfg.stage3.time.ratio_r_neq_t},
               {"avoid_t_hi", cfg.stage3.time.avoid_t_hi},
               {"avoid_r_lo", cfg.stage3.time.avoid_r_lo},
               {"avoid_enabled", cfg.stage3.time.avoid_enabled}};
  json stage3 = {{"iters", cfg.stage3.iters},
                 {"batch", cfg.stage3.batch},
                 {"time_sampler", std::move(time)},
                 {"loss_p", cfg.stage3.loss_p},
                 {"loss_c", cfg.stage3.loss_c},
                 {"velocity_source",
                  cfg.stage3.velocity_source == VelocitySource::kConditional
                      ? "conditional"
                      : "frozen_flow"},
                 {"class_dropout", cfg.stage3.class_dropout}};
  if (cfg.stage3.guidance) {
    const CfgConfig& g = *cfg.stage3.guidance;
    stage3["guidance"] = {
        {"omega_prime", {g.omega_prime_lo, g.omega_prime_hi}},
        {"kappa_rule",
         g.kappa_rule == KappaRule::kZero ? "zero" : "saturating"},
        {"stage_split", g.stage_split}};
  }
  doc["stage3"] = std::move(stage3);
  doc["compare"] = {{"n_eval", cfg.compare.n_eval},
                    {"curve_points", cfg.compare.curve_points}};
  doc["mode"] = comparison_mode_name(cfg.mode);
  doc["flops_per_forward"] = cfg.flops_per_forward;
  return doc;
}

RunConfig run_config_from_json(const json& doc) {
  check_keys(doc,
             {"schema_version", "seed", "out_dir", "task", "conditional",
              "net", "optimizer", "stage1", "stage2", "stage3", "compare",
              "mode", "flops_per_forward"},
             "top level");
  RunConfig cfg;
  if (!doc.contains("schema_version"))
    fail("config: missing schema_version");
  cfg.schema_version = doc.at("schema_version").get<int>();
  if (cfg.schema_version != kConfigSchemaVersion)
    fail("config: schema_version mismatch (have " +
         std::to_string(cfg.schema_version) + ", expected " +
         std::to_string(kConfigSchemaVersion) + ")");
  if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
  if (doc.contains("out_dir"))
    cfg.out_dir = doc.at("out_dir").get<std::string>();
  if (doc.contains("task")) {
    const json& t = doc.at("task");
    check_keys(t, {"source", "target", "prior_is_source", "class_labels"},
               "task");
    cfg.task.source = mixture_from_json(t.at("source"), "task.source");
    cfg.task.target = mixture_from_json(t.at("target"), "task.target");
    cfg.task.prior_is_source = t.value("prior_is_source", true);
    if (t.contains("class_labels"))
      cfg.task.class_labels = t.at("class_labels").get<std::vector<int>>();
  }
  if (doc.contains("conditional"))
    cfg.conditional = doc.at("conditional").get<bool>();
  if (doc.contains("net")) {
    const json& n = doc.at("net");
    check_keys(n, {"hidden", "activation"}, "net");
    cfg.net.hidden = n.at("hidden").get<std::vector<std::size_t>>();
    cfg.net.activation =
        activation_from_name(n.value("activation", std::string("tanh")));
  }
  if (doc.contains("optimizer")) {
    const json& o = doc.at("optimizer");
    check_keys(o, {"lr", "beta1", "beta2", "eps"}, "optimizer");
    cfg.adam.lr = o.value("lr", cfg.adam.lr);
    cfg.adam.beta1 = o.value("beta1", cfg.adam.beta1);
    cfg.adam.beta2 = o.value("beta2", cfg.adam.beta2);
    cfg.adam.eps = o.value("eps", cfg.adam.eps);
  }
  if (doc.contains("stage1")) {
    const json& s = doc.at("stage1");
    check_keys(s, {"iters", "batch"}, "stage1");
    cfg.stage1.iters = s.value("iters", cfg.stage1.iters);
    cfg.stage1.batch = s.value("batch", cfg.stage1.batch);
  }
  if (doc.contains("stage2")) {
    const json& s = doc.at("stage2");
    check_keys(s, {"n_pairs", "steps", "solver", "truncate_k", "block_size"},
               "stage2");
    cfg.stage2.n_pairs = s.value("n_pairs", cfg.stage2.n_pairs);
    cfg.stage2.steps = s.value("steps", cfg.stage2.steps);
    if (s.contains("solver"))
      cfg.stage2.solver = solver_from_name(s.at("solver").get<std::string>());
    cfg.stage2.truncate_k = s.value("truncate_k", cfg.stage2.truncate_k);
    cfg.stage2.block_size = s.value("block_size", cfg.stage2.block_size);
  }
  if (doc.contains("stage3")) {
    const json& s = doc.at("stage3");
    check_keys(s,
               {"iters", "batch", "time_sampler", "loss_p", "loss_c",
                "velocity_source", "class_dropout", "guidance"},
               "stage3");
    cfg.stage3.iters = s.value("iters", cfg.stage3.iters);
    cfg.stage3.batch = s.value("batch", cfg.stage3.batch);
    if (s.contains("time_sampler")) {
      const json& t = s.at("time_sampler");
      check_keys(t,
                 {"u_shape_a", "u_shape_enabled", "interval_mean",
                  "interval_std", "ratio_r_neq_t", "avoid_t_hi", "avoid_r_lo",
                  "avoid_enabled"},
                 "stage3.time_sampler");
      TimeSamplerConfig& ts = cfg.stage3.time;
      ts.u_shape_a = t.value("u_shape_a", ts.u_shape_a);
      ts.u_shape_enabled = t.value("u_shape_enabled", ts.u_shape_enabled);
      ts.interval_mean = t.value("interval_mean", ts.interval_mean);
      ts.interval_std = t.value("interval_std", ts.interval_std);
      ts.ratio_r_neq_t = t.value("ratio_r_neq_t", ts.ratio_r_neq_t);
      ts.avoid_t_hi = t.value("avoid_t_hi", ts.avoid_t_hi);
      ts.avoid_r_lo = t.value("avoid_r_lo", ts.avoid_r_lo);
      ts.avoid_enabled = t.value("avoid_enabled", ts.avoid_enabled);
    }
    cfg.stage3.loss_p = s.value("loss_p", cfg.stage3.loss_p);
    cfg.stage3.loss_c = s.value("loss_c", cfg.stage3.loss_c);
    if (s.contains("velocity_source")) {
      std::string vs = s.at("velocity_source").get<std::string>();
      if (vs == "conditional")
        cfg.stage3.velocity_source = VelocitySource::kConditional;
      else if (vs == "frozen_flow")
        cfg.stage3.velocity_source = VelocitySource::kFrozenFlow;
      else
        fail("config: unknown velocity_source '" + vs + "'");
    }
    cfg.stage3.class_dropout = s.value("class_dropout", cfg.stage3.class_dropout);
    if (s.contains("guidance") && !s.at("guidance").is_null()) {
      const json& g = s.at("guidance");
      check_keys(g, {"omega_prime", "kappa_rule", "stage_split"},
                 "stage3.guidance");
      CfgConfig gc;
      auto range = g.at("omega_prime").get<std::vector<double>>();
      if (range.size() != 2) fail("config: omega_prime must be [lo, hi]");
      gc.omega_prime_lo = range[0];
      gc.omega_prime_hi = range[1];
      std::string rule = g.value("kappa_rule", std::string("zero"));
      if (rule == "zero")
        gc.kappa_rule = KappaRule::kZero;
      else if (rule == "saturating")
        gc.kappa_rule = KappaRule::kSaturating;
      else
        fail("config: unknown kappa_rule '" + rule + "'");
      gc.stage_split = g.value("stage_split", gc.stage_split);
      cfg.stage3.guidance = gc;
    }
  }
  if (doc.contains("compare")) {
    const json& c = doc.at("compare");
    check_keys(c, {"n_eval", "curve_points"}, "compare");
    cfg.compare.n_eval = c.value("n_eval", cfg.compare.n_eval);
    cfg.compare.curve_points = c.value("curve_points", cfg.compare.curve_points);
  }
  if (doc.contains("mode"))
    cfg.mode = comparison_mode_from_name(doc.at("mode").get<std::string>());
  if (doc.contains("flops_per_forward"))
    cfg.flops_per_forward = doc.at("flops_per_forward").get<double>();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("config: cannot open '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    fail("config: parse error in '" + path + "': " + e.what());
  }
  return run_config_from_json(doc);
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) fail("config: cannot open '" + path + "' for writing");
  out << run_config_to_json(cfg).dump(1) << "\n";
}

std::string config_hash(const RunConfig& cfg) {
  std::string canon = run_config_to_json(cfg).dump();
  return hex64(fnv1a64(canon));
}

}  // namespace rmf
