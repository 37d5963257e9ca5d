#pragma once

#include <cstdint>
#include <vector>

#include "remeanflow/mlp.hpp"
#include "remeanflow/tensor.hpp"

namespace rmf {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
};

// Bias-corrected Adam over the flat parameter list of an MlpModel.
class AdamOptimizer {
 public:
  AdamOptimizer(const MlpModel& model, AdamConfig cfg);

  // Applies one update in place. Throws on non-finite gradients.
  void step(MlpModel& model, const MlpGradients& grads);

  std::int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::int64_t step_count_ = 0;
  std::vector<Tensor> m_weights_, v_weights_;
  std::vector<Tensor> m_biases_, v_biases_;
};

}  // namespace rmf
