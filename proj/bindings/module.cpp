// Python bindings for the 2D transport toolkit. Configs cross the boundary
// as JSON strings (the Python wrapper turns dicts into JSON); samples and
// couplings cross as numpy arrays.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "remeanflow/coupling.hpp"
#include "remeanflow/flow.hpp"
#include "remeanflow/meanflow.hpp"
#include "remeanflow/metrics.hpp"
#include "remeanflow/pipeline.hpp"
#include "remeanflow/timesampler.hpp"
#include "remeanflow/util.hpp"

namespace py = pybind11;
using namespace rmf;

namespace {

Tensor np_to_tensor(const py::array_t<double, py::array::c_style |
                                                  py::array::forcecast>& a) {
  if (a.ndim() != 2) throw Error("expected a 2-d array");
  Tensor t = Tensor::zeros({static_cast<std::size_t>(a.shape(0)),
                            static_cast<std::size_t>(a.shape(1))});
  std::memcpy(t.values.data(), a.data(), t.size() * sizeof(double));
  return t;
}

py::array_t<double> tensor_to_np(const Tensor& t) {
  py::array_t<double> a({t.rows(), t.cols()});
  std::memcpy(a.mutable_data(), t.values.data(), t.size() * sizeof(double));
  return a;
}

RunConfig parse_config(const std::string& config_json) {
  return run_config_from_json(nlohmann::json::parse(config_json));
}

py::array_t<double> coupling_field(const CouplingSet& set, int which) {
  std::size_t n = set.size(), d = set.dim();
  if (which == 2) {
    py::array_t<double> a(std::vector<py::ssize_t>{
        static_cast<py::ssize_t>(n)});
    auto* p = a.mutable_data();
    for (std::size_t i = 0; i < n; ++i) p[i] = set.couplings[i].distance;
    return a;
  }
  py::array_t<double> a({n, d});
  auto* p = a.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = which == 0 ? set.couplings[i].x : set.couplings[i].z;
    for (std::size_t j = 0; j < d; ++j) p[i * d + j] = v[j];
  }
  return a;
}

}  // namespace

PYBIND11_MODULE(_remeanflow, m) {
  m.doc() =
      "One-step generative transport on 2D Gaussian mixtures: rectified "
      "flows, coupling reflow with distance truncation, and mean-velocity "
      "models.";

  py::register_exception<Error>(m, "RmfError");

  m.def("default_config_json",
        [] { return run_config_to_json(RunConfig{}).dump(); },
        "Canonical JSON for the default run configuration.");
  m.def("config_hash",
        [](const std::string& cfg) { return config_hash(parse_config(cfg)); },
        py::arg("config_json"));

  py::class_<CouplingSet>(m, "Couplings")
      .def_property_readonly("x",
                             [](const CouplingSet& s) {
                               return coupling_field(s, 0);
                             })
      .def_property_readonly("z",
                             [](const CouplingSet& s) {
                               return coupling_field(s, 1);
                             })
      .def_property_readonly("distances",
                             [](const CouplingSet& s) {
                               return coupling_field(s, 2);
                             })
      .def_property_readonly("truncated",
                             [](const CouplingSet& s) {
                               return s.provenance.truncated;
                             })
      .def("__len__", &CouplingSet::size)
      .def("truncate",
           [](const CouplingSet& s, double k) {
             return truncate_by_distance(s, k);
           },
           py::arg("k"),
           "Drop the k percent largest-distance couplings (nearest rank).")
      .def("save", [](const CouplingSet& s,
                      const std::string& path) { save_couplings(path, s); },
           py::arg("path"))
      .def_static("load", [](const std::string& path) {
        return load_couplings(path);
      }, py::arg("path"));

  py::class_<FlowModel>(m, "FlowModel")
      .def("velocity",
           [](const FlowModel& f, const py::array_t<double>& z, double t) {
             return tensor_to_np(f.velocity_at(np_to_tensor(z), t, nullptr));
           },
           py::arg("z"), py::arg("t"))
      .def("integrate",
           [](const FlowModel& f, const py::array_t<double>& start,
              std::size_t steps, const std::string& solver, bool to_data) {
             return tensor_to_np(integrate_ode(
                 f, np_to_tensor(start), steps, solver_from_name(solver),
                 to_data ? Direction::kNoiseToData : Direction::kDataToNoise,
                 nullptr, nullptr, Phase::kEval));
           },
           py::arg("start"), py::arg("steps"), py::arg("solver") = "euler",
           py::arg("to_data") = true)
      .def("sample_one_step",
           [](const FlowModel& f, const py::array_t<double>& z) {
             Tensor zt = np_to_tensor(z);
             Tensor v = f.velocity_at(zt, 1.0, nullptr);
             for (std::size_t i = 0; i < zt.size(); ++i)
               zt.values[i] -= v.values[i];
             return tensor_to_np(zt);
           },
           py::arg("z"), "Single Euler step from noise to data.")
      .def("save",
           [](const FlowModel& f, const std::string& path) {
             save_flow_checkpoint(path, f, "python");
           },
           py::arg("path"))
      .def_static("load", [](const std::string& path) {
        return load_flow_checkpoint(path);
      }, py::arg("path"));

  py::class_<MeanFlowModel>(m, "MeanFlowModel")
      .def("mean_velocity",
           [](const MeanFlowModel& f, const py::array_t<double>& z, double r,
              double t) {
             Tensor zt = np_to_tensor(z);
             std::vector<double> rs(zt.rows(), r), ts(zt.rows(), t);
             return tensor_to_np(f.mean_velocity(zt, rs, ts, nullptr));
           },
           py::arg("z"), py::arg("r"), py::arg("t"))
      .def("sample_one_step",
           [](const MeanFlowModel& f, const py::array_t<double>& z) {
             return tensor_to_np(
                 one_step_sample(f, np_to_tensor(z), nullptr, nullptr));
           },
           py::arg("z"))
      .def("save",
           [](const MeanFlowModel& f, const std::string& path) {
             save_meanflow_checkpoint(path, f, "python");
           },
           py::arg("path"))
      .def_static("load", [](const std::string& path) {
        return load_meanflow_checkpoint(path);
      }, py::arg("path"));

  m.def("sample_prior",
        [](const std::string& cfg_json, std::size_t n, std::uint64_t seed) {
          RunConfig cfg = parse_config(cfg_json);
          Rng rng(seed);
          return tensor_to_np(sample_mixture(cfg.task.prior(), n, rng));
        },
        py::arg("config_json"), py::arg("n"), py::arg("seed"));
  m.def("sample_target",
        [](const std::string& cfg_json, std::size_t n, std::uint64_t seed) {
          RunConfig cfg = parse_config(cfg_json);
          Rng rng(seed);
          return tensor_to_np(sample_mixture(cfg.task.target, n, rng));
        },
        py::arg("config_json"), py::arg("n"), py::arg("seed"));

  m.def("train_flow",
        [](const std::string& cfg_json) {
          RunConfig cfg = parse_config(cfg_json);
          BudgetLedger ledger;
          return run_stage1(cfg, ledger).model;
        },
        py::arg("config_json"),
        "Train the stage-1 velocity model on independent couplings.");
  m.def("reflow",
        [](const std::string& cfg_json, const FlowModel& flow,
           std::size_t workers) {
          RunConfig cfg = parse_config(cfg_json);
          BudgetLedger ledger;
          Stage2Result r = run_stage2(cfg, flow, ledger, workers);
          return py::make_tuple(r.raw, r.truncated, r.failed_pairs);
        },
        py::arg("config_json"), py::arg("flow"), py::arg("workers") = 1,
        "Integrate data to noise, returning (raw, truncated, failed_pairs).");
  m.def("train_meanflow",
        [](const std::string& cfg_json, const CouplingSet& couplings,
           const FlowModel* frozen_flow) {
          RunConfig cfg = parse_config(cfg_json);
          BudgetLedger ledger;
          return run_stage3(cfg, couplings, frozen_flow, ledger).model;
        },
        py::arg("config_json"), py::arg("couplings"),
        py::arg("frozen_flow") = nullptr,
        "Train the mean-velocity model on the given couplings.");
  m.def("compare",
        [](const std::string& cfg_json, const std::vector<std::uint64_t>& seeds,
           const std::string& out_dir, std::size_t workers) {
          RunConfig cfg = parse_config(cfg_json);
          ComparisonResult r = run_comparison(cfg, seeds, out_dir, workers);
          nlohmann::json out;
          for (int i = 0; i < 3; ++i) {
            std::string name =
                comparison_mode_name(static_cast<ComparisonMode>(i));
            out[name] = {
                {"median_outlier_rate",
                 r.median_outlier_rate[static_cast<std::size_t>(i)]},
                {"median_energy_distance",
                 r.median_energy_distance[static_cast<std::size_t>(i)]}};
          }
          return out.dump();
        },
        py::arg("config_json"), py::arg("seeds"), py::arg("out_dir") = "",
        py::arg("workers") = 1,
        "Run the three-method comparison; returns a JSON summary string.");

  m.def("energy_distance",
        [](const py::array_t<double>& a, const py::array_t<double>& b,
           std::uint64_t seed) {
          Rng rng(seed);
          return energy_distance(np_to_tensor(a), np_to_tensor(b), &rng);
        },
        py::arg("a"), py::arg("b"), py::arg("seed") = 0);
  m.def("outlier_rate",
        [](const py::array_t<double>& samples, const std::string& cfg_json) {
          RunConfig cfg = parse_config(cfg_json);
          return outlier_rate(np_to_tensor(samples), cfg.task.target,
                              default_outlier_threshold(cfg.task.target));
        },
        py::arg("samples"), py::arg("config_json"));
  m.def("angular_error",
        [](const std::vector<double>& a, const std::vector<double>& b) {
          return angular_error(a, b);
        },
        py::arg("a"), py::arg("b"));
  m.def("draw_time_pairs",
        [](const std::string& cfg_json, std::size_t n, std::uint64_t seed) {
          RunConfig cfg = parse_config(cfg_json);
          Rng rng(seed);
          py::array_t<double> out({n, static_cast<std::size_t>(2)});
          auto* p = out.mutable_data();
          for (std::size_t i = 0; i < n; ++i) {
            TimePair tp = sample_time_pair(cfg.stage3.time, rng);
            p[2 * i] = tp.r;
            p[2 * i + 1] = tp.t;
          }
          return out;
        },
        py::arg("config_json"), py::arg("n"), py::arg("seed"),
        "Draw (r, t) pairs from the configured time sampler.");
}
