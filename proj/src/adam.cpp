#include "remeanflow/adam.hpp"

#include <cmath>
#include <string>

#include "remeanflow/util.hpp"

namespace rmf {

namespace {

void update(AlignedVector& p, const AlignedVector& g, AlignedVector& m,
            AlignedVector& v, const AdamConfig& cfg, double bc1, double bc2,
            const char* what) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(g[i]))
      fail(std::string("adam_step: non-finite gradient in ") + what +
           " at index " + std::to_string(i));
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    double mhat = m[i] / bc1;
    double vhat = v[i] / bc2;
    p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace

AdamOptimizer::AdamOptimizer(const MlpModel& model, AdamConfig cfg)
    : cfg_(cfg) {
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    m_weights_.push_back(Tensor::zeros(model.weights[i].shape));
    v_weights_.push_back(Tensor::zeros(model.weights[i].shape));
    m_biases_.push_back(Tensor::zeros(model.biases[i].shape));
    v_biases_.push_back(Tensor::zeros(model.biases[i].shape));
  }
}

void AdamOptimizer::step(MlpModel& model, const MlpGradients& grads) {
  if (grads.weights.size() != model.weights.size())
    fail("adam_step: gradient/model layer mismatch");
  ++step_count_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    update(model.weights[i].values, grads.weights[i].values,
           m_weights_[i].values, v_weights_[i].values, cfg_, bc1, bc2,
           "weights");
    update(model.biases[i].values, grads.biases[i].values,
           m_biases_[i].values, v_biases_[i].values, cfg_, bc1, bc2, "biases");
  }
}

}  // namespace rmf
