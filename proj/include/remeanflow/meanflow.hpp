#pragma once

#include <functional>
#include <vector>

#include "remeanflow/adam.hpp"
#include "remeanflow/budget.hpp"
#include "remeanflow/flow.hpp"
#include "remeanflow/timesampler.hpp"

namespace rmf {

// Mean-velocity network u(z_t, r, t [, class]).
struct MeanFlowModel {
  MlpModel net;
  std::size_t data_dim = 0;
  std::size_t num_classes = 0;

  std::size_t input_width() const { return data_dim + 2 + num_classes; }
  void validate() const;

  Tensor mean_velocity(const Tensor& z_t, const std::vector<double>& r,
                       const std::vector<double>& t,
                       const std::vector<int>* cls = nullptr) const;
};

// What stands in for v(z_t, t) in the training target.
enum class VelocitySource {
  kConditional,  // the conditional sample z - x
  kFrozenFlow,   // a frozen stage-1 velocity model
};

// Bootstrap target v - (t - r) d/dt u, with the total derivative taken by
// forward-mode JVP with tangent (z - x, 0, 1). The result is a constant:
// no gradient flows through it.
//
// `path_tangent` is z - x; `velocity` is whatever realizes v(z_t, t).
Tensor meanflow_target(const MeanFlowModel& model, const Tensor& z_t,
                       const Tensor& path_tangent,
                       const std::vector<double>& r,
                       const std::vector<double>& t,
                       const std::vector<int>* cls, const Tensor& velocity);

struct AdaptiveLossResult {
  double loss = 0.0;
  std::vector<double> weights;  // per-sample (e + c)^{-p}, constants
  std::vector<double> errors;   // per-sample squared error
};

// loss = mean(w * e), e = |u_pred - u_tgt|^2, w = (e + c)^{-p} detached.
AdaptiveLossResult adaptive_loss(const Tensor& u_pred, const Tensor& u_tgt,
                                 double p, double c);

enum class KappaRule { kZero, kSaturating };

struct CfgConfig {
  double omega_prime_lo = 1.0;
  double omega_prime_hi = 3.0;
  KappaRule kappa_rule = KappaRule::kZero;
  double stage_split = 0.5;  // fraction of iters before the guided stage

  void validate() const;
  // Maps an effective scale w' to (omega, kappa) under the chosen rule.
  void resolve(double omega_prime, double* omega, double* kappa) const;
};

// Guided velocity field: omega v(z_t,t|c) + kappa u(z_t,t,t|c)
// + (1 - omega + kappa) u(z_t,t,t).
Tensor cfg_velocity(const FlowModel& flow, const MeanFlowModel& mf,
                    const Tensor& z_t, const std::vector<double>& t,
                    const std::vector<int>& cls, double omega, double kappa);

struct MeanFlowTrainConfig {
  std::size_t iters = 10000;
  std::size_t batch = 1024;
  std::vector<std::size_t> hidden = {64, 64};
  Activation activation = Activation::kTanh;
  AdamConfig adam;
  TimeSamplerConfig time;
  double loss_p = 0.5;
  double loss_c = 1e-3;
  VelocitySource velocity_source = VelocitySource::kConditional;
  const FlowModel* frozen_flow = nullptr;  // required for kFrozenFlow
  bool conditional = false;
  std::size_t num_classes = 0;
  double class_dropout = 0.1;
  const CfgConfig* cfg = nullptr;  // enables the two-stage guided schedule
  std::size_t snapshot_every = 0;
  std::function<void(const MeanFlowModel&, std::size_t)> snapshot_cb;
};

struct MeanFlowTrainResult {
  MeanFlowModel model;
  std::vector<double> loss_trace;
};

MeanFlowTrainResult train_meanflow(const CouplingSource& source,
                                   const MeanFlowTrainConfig& cfg, Rng& rng,
                                   BudgetLedger* ledger = nullptr,
                                   Phase phase = Phase::kStage3Train);

// x = z - u(z, 0, 1); one forward evaluation per sample.
Tensor one_step_sample(const MeanFlowModel& model, const Tensor& z,
                       const std::vector<int>* cls = nullptr,
                       BudgetLedger* ledger = nullptr);

// Brute-force mean velocity: integrate the flow ODE from t down to r with
// n_quad euler steps and average the instantaneous velocities along the
// realized trajectory. Oracle for trained MeanFlowModels.
Tensor mean_velocity_quadrature_oracle(const FlowModel& flow,
                                       const Tensor& z_start, double r,
                                       double t, std::size_t n_quad,
                                       const std::vector<int>* cls = nullptr);

}  // namespace rmf
