#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "remeanflow/adam.hpp"
#include "remeanflow/budget.hpp"
#include "remeanflow/coupling.hpp"
#include "remeanflow/mixture.hpp"
#include "remeanflow/mlp.hpp"
#include "remeanflow/rng.hpp"

namespace rmf {

// Instantaneous-velocity network v(z_t, t [, class]). Class conditioning is
// a one-hot append; an all-zero one-hot means "unconditional".
struct FlowModel {
  MlpModel net;
  std::size_t data_dim = 0;
  std::size_t num_classes = 0;

  std::size_t input_width() const { return data_dim + 1 + num_classes; }
  void validate() const;

  // Batched evaluation; t per row. cls entries < 0 evaluate unconditionally.
  Tensor velocity(const Tensor& z_t, const std::vector<double>& t,
                  const std::vector<int>* cls = nullptr) const;
  Tensor velocity_at(const Tensor& z_t, double t,
                     const std::vector<int>* cls = nullptr) const;
};

// Where training batches of (x, z [, class]) couplings come from.
class CouplingSource {
 public:
  virtual ~CouplingSource() = default;
  virtual std::size_t dim() const = 0;
  virtual void sample(std::size_t n, Rng& rng, Tensor& x, Tensor& z,
                      std::vector<int>* cls) const = 0;
};

// Independent couplings: x ~ data (task target), z ~ prior.
class IndependentCouplings final : public CouplingSource {
 public:
  explicit IndependentCouplings(const ToyTask& task);
  std::size_t dim() const override { return task_.dim(); }
  void sample(std::size_t n, Rng& rng, Tensor& x, Tensor& z,
              std::vector<int>* cls) const override;

 private:
  ToyTask task_;
  GaussianMixture prior_;
};

// Draws stored couplings with replacement.
class DatasetCouplings final : public CouplingSource {
 public:
  explicit DatasetCouplings(const CouplingSet& set);
  std::size_t dim() const override;
  void sample(std::size_t n, Rng& rng, Tensor& x, Tensor& z,
              std::vector<int>* cls) const override;

 private:
  const CouplingSet* set_;
};

struct FlowTrainConfig {
  std::size_t iters = 10000;
  std::size_t batch = 1024;
  std::vector<std::size_t> hidden = {64, 64};
  Activation activation = Activation::kTanh;
  AdamConfig adam;
  bool conditional = false;
  double class_dropout = 0.1;
  std::size_t num_classes = 0;  // required when conditional
  // Optional snapshot hook, called every `snapshot_every` steps.
  std::size_t snapshot_every = 0;
  std::function<void(const FlowModel&, std::size_t)> snapshot_cb;
};

struct FlowTrainResult {
  FlowModel model;
  std::vector<double> loss_trace;
};

// Velocity regression on couplings from `source`, t ~ U(0, 1),
// z_t = (1-t)x + tz, target z - x.
FlowTrainResult train_rectified_flow(const CouplingSource& source,
                                     const FlowTrainConfig& cfg, Rng& rng,
                                     BudgetLedger* ledger = nullptr,
                                     Phase phase = Phase::kStage1Train);

enum class Solver { kEuler, kHeun };
enum class Direction { kNoiseToData, kDataToNoise };

std::string solver_name(Solver s);
Solver solver_from_name(const std::string& name);

// Fixed-step integration over t in [0, 1]. kNoiseToData starts at t=1 and
// steps x -= h v; kDataToNoise starts at t=0 and steps x += h v. Throws on
// a non-finite state, reporting the step index.
Tensor integrate_ode(const FlowModel& model, const Tensor& start,
                     std::size_t steps, Solver solver, Direction direction,
                     const std::vector<int>* cls = nullptr,
                     BudgetLedger* ledger = nullptr,
                     Phase phase = Phase::kEval);

struct GenerateResult {
  CouplingSet set;
  std::size_t failed_pairs = 0;
};

// Reflow: x ~ data, integrate data->noise, record (x, z, |x-z|). Pair index
// space is processed in fixed-size blocks with per-block seed streams and
// results are concatenated in block order, so the output is identical for
// any worker count.
GenerateResult generate_couplings(const FlowModel& model, const ToyTask& task,
                                  std::size_t n_pairs, std::size_t steps,
                                  Solver solver, Rng& rng,
                                  BudgetLedger* ledger = nullptr,
                                  std::size_t block_size = 4096,
                                  std::size_t workers = 1);

// Mean perpendicular deviation of intermediate trajectory states from the
// endpoint chord, normalized by chord length; averaged over rows of z.
double straightness_deviation(const FlowModel& model, const Tensor& z,
                              std::size_t steps,
                              const std::vector<int>* cls = nullptr);

}  // namespace rmf
