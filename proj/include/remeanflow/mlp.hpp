#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "remeanflow/rng.hpp"
#include "remeanflow/tensor.hpp"

namespace rmf {

enum class Activation { kTanh, kSilu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Fully connected network. Hidden layers get the activation; the output
// layer is affine. weights[i] has shape (layer_sizes[i+1], layer_sizes[i]).
struct MlpModel {
  std::vector<std::size_t> layer_sizes;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  Activation activation = Activation::kTanh;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return weights.size(); }
  std::size_t parameter_count() const;

  void validate() const;

  // Glorot-uniform init: per-layer uniform in +-sqrt(6/(fan_in+fan_out)).
  static MlpModel init(std::vector<std::size_t> layer_sizes, Activation act,
                       Rng& rng);
};

struct MlpGradients {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  Tensor input;

  static MlpGradients zeros_like(const MlpModel& model, std::size_t batch);
  void accumulate(const MlpGradients& other);
  void scale(double s);
};

// Batched forward pass; input is (batch, in_dim).
Tensor mlp_forward(const MlpModel& model, const Tensor& input);

// Forward-mode: primal out = forward(primal in), tangent out = J * tangent in.
DualTensor mlp_jvp(const MlpModel& model, const DualTensor& input);

// Reverse-mode gradients of sum(upstream . output) w.r.t. parameters and
// the input. upstream is (batch, out_dim).
MlpGradients mlp_backward(const MlpModel& model, const Tensor& input,
                          const Tensor& upstream);

}  // namespace rmf
