#include "remeanflow/mlp.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "remeanflow/util.hpp"

namespace rmf {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

ConstMatMap map2d(const Tensor& t) {
  return ConstMatMap(t.values.data(), static_cast<Eigen::Index>(t.shape[0]),
                     static_cast<Eigen::Index>(t.shape[1]));
}

// Both activations are written in terms of exp, which Eigen vectorizes for
// doubles (std::tanh would fall back to a scalar libm call per element).
// Every caller goes through this one implementation so that forward, JVP
// and backward see bitwise-identical activation values.
void activate_with_deriv(Activation act, const Mat& pre, Mat* out,
                         Mat* deriv) {
  if (act == Activation::kTanh) {
    Eigen::ArrayXXd t = 1.0 - 2.0 / ((2.0 * pre.array()).exp() + 1.0);
    if (deriv) *deriv = (1.0 - t * t).matrix();
    *out = t.matrix();
    return;
  }
  Eigen::ArrayXXd s = 1.0 / (1.0 + (-pre.array()).exp());
  if (deriv) *deriv = (s * (1.0 + pre.array() * (1.0 - s))).matrix();
  *out = (pre.array() * s).matrix();
}

Mat activate(Activation act, const Mat& pre) {
  Mat out;
  activate_with_deriv(act, pre, &out, nullptr);
  return out;
}

void check_input(const MlpModel& model, const Tensor& input) {
  model.validate();
  if (input.ndim() != 2) fail("mlp: input must be 2-D (batch, features)");
  if (input.cols() != model.input_dim())
    fail("mlp: input width " + std::to_string(input.cols()) +
         " != layer 0 width " + std::to_string(model.input_dim()));
}

}  // namespace

std::string activation_name(Activation a) {
  return a == Activation::kTanh ? "tanh" : "silu";
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "silu") return Activation::kSilu;
  fail("unknown activation '" + name + "'");
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < weights.size(); ++i)
    n += weights[i].size() + biases[i].size();
  return n;
}

void MlpModel::validate() const {
  if (layer_sizes.size() < 2) fail("MlpModel: need at least input and output");
  if (weights.size() != layer_sizes.size() - 1 ||
      biases.size() != weights.size())
    fail("MlpModel: layer count mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].ndim() != 2 || weights[i].shape[0] != layer_sizes[i + 1] ||
        weights[i].shape[1] != layer_sizes[i])
      fail("MlpModel: weight shape mismatch at layer " + std::to_string(i));
    if (biases[i].size() != layer_sizes[i + 1])
      fail("MlpModel: bias shape mismatch at layer " + std::to_string(i));
  }
}

MlpModel MlpModel::init(std::vector<std::size_t> layer_sizes, Activation act,
                        Rng& rng) {
  MlpModel m;
  m.layer_sizes = std::move(layer_sizes);
  m.activation = act;
  if (m.layer_sizes.size() < 2) fail("MlpModel::init: need >= 2 layer sizes");
  for (std::size_t i = 0; i + 1 < m.layer_sizes.size(); ++i) {
    std::size_t fan_in = m.layer_sizes[i];
    std::size_t fan_out = m.layer_sizes[i + 1];
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w = Tensor::zeros({fan_out, fan_in});
    for (double& v : w.values) v = rng.uniform(-bound, bound);
    m.weights.push_back(std::move(w));
    m.biases.push_back(Tensor::zeros({fan_out}));
  }
  return m;
}

MlpGradients MlpGradients::zeros_like(const MlpModel& model,
                                      std::size_t batch) {
  MlpGradients g;
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    g.weights.push_back(Tensor::zeros(model.weights[i].shape));
    g.biases.push_back(Tensor::zeros(model.biases[i].shape));
  }
  g.input = Tensor::zeros({batch, model.input_dim()});
  return g;
}

void MlpGradients::accumulate(const MlpGradients& other) {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    for (std::size_t j = 0; j < weights[i].size(); ++j)
      weights[i].values[j] += other.weights[i].values[j];
    for (std::size_t j = 0; j < biases[i].size(); ++j)
      biases[i].values[j] += other.biases[i].values[j];
  }
}

void MlpGradients::scale(double s) {
  for (auto& w : weights)
    for (double& v : w.values) v *= s;
  for (auto& b : biases)
    for (double& v : b.values) v *= s;
  for (double& v : input.values) v *= s;
}

Tensor mlp_forward(const MlpModel& model, const Tensor& input) {
  check_input(model, input);
  Mat h = map2d(input);
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    ConstMatMap w = map2d(model.weights[i]);
    ConstVecMap b(model.biases[i].values.data(),
                  static_cast<Eigen::Index>(model.biases[i].size()));
    Mat pre = h * w.transpose();
    pre.rowwise() += b.transpose();
    bool last = (i + 1 == model.num_layers());
    h = last ? std::move(pre) : activate(model.activation, pre);
  }
  Tensor out = Tensor::zeros({input.rows(), model.output_dim()});
  MatMap(out.values.data(), h.rows(), h.cols()) = h;
  return out;
}

DualTensor mlp_jvp(const MlpModel& model, const DualTensor& input) {
  check_input(model, input.primal);
  if (!input.primal.same_shape(input.tangent))
    fail("mlp_jvp: primal/tangent shape mismatch");
  Mat h = map2d(input.primal);
  Mat hd = map2d(input.tangent);
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    ConstMatMap w = map2d(model.weights[i]);
    ConstVecMap b(model.biases[i].values.data(),
                  static_cast<Eigen::Index>(model.biases[i].size()));
    Mat pre = h * w.transpose();
    pre.rowwise() += b.transpose();
    Mat pred = hd * w.transpose();
    if (i + 1 == model.num_layers()) {
      h = std::move(pre);
      hd = std::move(pred);
    } else {
      Mat dact;
      activate_with_deriv(model.activation, pre, &h, &dact);
      hd = dact.cwiseProduct(pred);
    }
  }
  Tensor p = Tensor::zeros({input.primal.rows(), model.output_dim()});
  Tensor t = Tensor::zeros(p.shape);
  MatMap(p.values.data(), h.rows(), h.cols()) = h;
  MatMap(t.values.data(), hd.rows(), hd.cols()) = hd;
  return DualTensor(std::move(p), std::move(t));
}

MlpGradients mlp_backward(const MlpModel& model, const Tensor& input,
                          const Tensor& upstream) {
  check_input(model, input);
  if (upstream.ndim() != 2 || upstream.rows() != input.rows() ||
      upstream.cols() != model.output_dim())
    fail("mlp_backward: upstream shape mismatch");

  std::size_t n_layers = model.num_layers();
  std::vector<Mat> acts;    // layer inputs, acts[i] feeds layer i
  std::vector<Mat> derivs;  // activation derivatives of hidden layers
  acts.reserve(n_layers);
  derivs.reserve(n_layers);
  acts.emplace_back(map2d(input));
  for (std::size_t i = 0; i < n_layers; ++i) {
    ConstMatMap w = map2d(model.weights[i]);
    ConstVecMap b(model.biases[i].values.data(),
                  static_cast<Eigen::Index>(model.biases[i].size()));
    Mat pre = acts.back() * w.transpose();
    pre.rowwise() += b.transpose();
    if (i + 1 < n_layers) {
      Mat act, deriv;
      activate_with_deriv(model.activation, pre, &act, &deriv);
      acts.push_back(std::move(act));
      derivs.push_back(std::move(deriv));
    }
  }

  MlpGradients grads = MlpGradients::zeros_like(model, input.rows());
  Mat g = map2d(upstream);  // gradient w.r.t. layer output (post-affine)
  for (std::size_t ii = n_layers; ii-- > 0;) {
    ConstMatMap w = map2d(model.weights[ii]);
    // Gradient w.r.t. pre-activation: output layer is affine.
    const Mat& gp = g;
    MatMap(grads.weights[ii].values.data(), w.rows(), w.cols()).noalias() =
        gp.transpose() * acts[ii];
    VecMap(grads.biases[ii].values.data(),
           static_cast<Eigen::Index>(grads.biases[ii].size())) =
        gp.colwise().sum().transpose();
    Mat gin = gp * w;
    if (ii > 0) {
      g = gin.cwiseProduct(derivs[ii - 1]);
    } else {
      MatMap(grads.input.values.data(), gin.rows(), gin.cols()) = gin;
    }
  }
  return grads;
}

}  // namespace rmf
