#include "remeanflow/meanflow.hpp"

#include <cmath>
#include <string>

#include "remeanflow/netio.hpp"
#include "remeanflow/util.hpp"

namespace rmf {

void MeanFlowModel::validate() const {
  net.validate();
  if (net.input_dim() != input_width())
    fail("MeanFlowModel: net input width != data_dim + 2 + num_classes");
  if (net.output_dim() != data_dim)
    fail("MeanFlowModel: net output width != data dimension");
}

Tensor MeanFlowModel::mean_velocity(const Tensor& z_t,
                                    const std::vector<double>& r,
                                    const std::vector<double>& t,
                                    const std::vector<int>* cls) const {
  Tensor in = assemble_net_input(z_t, {&r, &t}, num_classes, cls);
  return mlp_forward(net, in);
}

Tensor meanflow_target(const MeanFlowModel& model, const Tensor& z_t,
                       const Tensor& path_tangent,
                       const std::vector<double>& r,
                       const std::vector<double>& t,
                       const std::vector<int>* cls, const Tensor& velocity) {
  model.validate();
  std::size_t n = z_t.rows();
  for (std::size_t i = 0; i < n; ++i)
    if (!(0.0 <= r[i] && r[i] <= t[i] && t[i] <= 1.0))
      fail("meanflow_target: need 0 <= r <= t <= 1 at row " +
           std::to_string(i));
  if (!z_t.same_shape(path_tangent) || !z_t.same_shape(velocity))
    fail("meanflow_target: shape mismatch");

  Tensor primal = assemble_net_input(z_t, {&r, &t}, model.num_classes, cls);
  std::vector<double> zero(n, 0.0), one(n, 1.0);
  // Tangent: dz_t/dt on the state slot, 0 on r, 1 on t, 0 on the one-hot.
  Tensor tangent =
      assemble_net_input(path_tangent, {&zero, &one}, model.num_classes,
                         nullptr);
  DualTensor out = mlp_jvp(model.net, DualTensor(primal, tangent));
  out.tangent.require_finite("meanflow_target jvp");

  Tensor u_tgt = Tensor::zeros(velocity.shape);
  std::size_t d = z_t.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double gap = t[i] - r[i];
    for (std::size_t j = 0; j < d; ++j)
      u_tgt.at(i, j) = velocity.at(i, j) - gap * out.tangent.at(i, j);
  }
  return u_tgt;
}

AdaptiveLossResult adaptive_loss(const Tensor& u_pred, const Tensor& u_tgt,
                                 double p, double c) {
  if (!u_pred.same_shape(u_tgt)) fail("adaptive_loss: shape mismatch");
  if (p < 0.0) fail("adaptive_loss: p must be >= 0");
  if (c <= 0.0) fail("adaptive_loss: c must be > 0");
  std::size_t n = u_pred.rows();
  std::size_t d = u_pred.cols();
  AdaptiveLossResult res;
  res.weights.resize(n);
  res.errors.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double e = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double diff = u_pred.at(i, j) - u_tgt.at(i, j);
      e += diff * diff;
    }
    res.errors[i] = e;
    res.weights[i] = std::pow(e + c, -p);
    res.loss += res.weights[i] * e;
  }
  res.loss /= static_cast<double>(n);
  return res;
}

void CfgConfig::validate() const {
  if (omega_prime_lo < 1.0) fail("CfgConfig: omega_prime lower bound must be >= 1");
  if (omega_prime_hi < omega_prime_lo) fail("CfgConfig: empty omega_prime range");
  if (stage_split < 0.0 || stage_split > 1.0)
    fail("CfgConfig: stage_split must be in [0, 1]");
}

void CfgConfig::resolve(double omega_prime, double* omega,
                        double* kappa) const {
  if (kappa_rule == KappaRule::kZero) {
    *kappa = 0.0;
    *omega = omega_prime;
    return;
  }
  // As printed, kappa = max(1, w'-1) with omega = w'/(1-kappa) divides by
  // zero at kappa = 1; clamp kappa below 1 to keep the field finite.
  double k = std::max(1.0, omega_prime - 1.0);
  k = std::min(k, 0.99);
  *kappa = k;
  *omega = omega_prime / (1.0 - k);
}

Tensor cfg_velocity(const FlowModel& flow, const MeanFlowModel& mf,
                    const Tensor& z_t, const std::vector<double>& t,
                    const std::vector<int>& cls, double omega, double kappa) {
  flow.validate();
  mf.validate();
  if (mf.num_classes == 0 || flow.num_classes == 0)
    fail("cfg_velocity: both models must support class conditioning");
  for (int c : cls)
    if (c < 0) fail("cfg_velocity: class label required for every row");

  Tensor v_cond = flow.velocity(z_t, t, &cls);
  Tensor u_cond = mf.mean_velocity(z_t, t, t, &cls);
  std::vector<int> uncond(z_t.rows(), -1);
  Tensor u_uncond = mf.mean_velocity(z_t, t, t, &uncond);

  Tensor out = Tensor::zeros(v_cond.shape);
  double w3 = 1.0 - omega + kappa;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values[i] = omega * v_cond.values[i] + kappa * u_cond.values[i] +
                    w3 * u_uncond.values[i];
  return out;
}

MeanFlowTrainResult train_meanflow(const CouplingSource& source,
                                   const MeanFlowTrainConfig& cfg, Rng& rng,
                                   BudgetLedger* ledger, Phase phase) {
  if (cfg.iters == 0) fail("train_meanflow: iters must be positive");
  if (cfg.batch == 0) fail("train_meanflow: batch must be positive");
  cfg.time.validate();
  if (cfg.velocity_source == VelocitySource::kFrozenFlow && !cfg.frozen_flow)
    fail("train_meanflow: frozen_flow required for kFrozenFlow source");
  if (cfg.conditional && cfg.num_classes == 0)
    fail("train_meanflow: conditional training needs num_classes");
  if (cfg.cfg) {
    cfg.cfg->validate();
    if (!cfg.conditional)
      fail("train_meanflow: guided schedule needs class conditioning");
  }

  std::size_t d = source.dim();
  MeanFlowModel model;
  model.data_dim = d;
  model.num_classes = cfg.conditional ? cfg.num_classes : 0;
  std::vector<std::size_t> sizes;
  sizes.push_back(model.input_width());
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(d);
  model.net = MlpModel::init(sizes, cfg.activation, rng);

  AdamOptimizer opt(model.net, cfg.adam);
  MeanFlowTrainResult result;
  result.loss_trace.reserve(cfg.iters);

  std::size_t guided_from =
      cfg.cfg ? static_cast<std::size_t>(cfg.cfg->stage_split *
                                         static_cast<double>(cfg.iters))
              : cfg.iters;

  Tensor x, z;
  std::vector<int> cls_buf;
  std::vector<int>* cls = cfg.conditional ? &cls_buf : nullptr;
  for (std::size_t step = 0; step < cfg.iters; ++step) {
    source.sample(cfg.batch, rng, x, z, cls);
    std::vector<int> cls_kept;  // pre-dropout labels, for the guided field
    if (cls) {
      cls_kept = *cls;
      if (cfg.class_dropout > 0.0)
        for (auto& c : *cls)
          if (rng.uniform() < cfg.class_dropout) c = -1;
    }

    std::vector<double> r(cfg.batch), t(cfg.batch);
    for (std::size_t i = 0; i < cfg.batch; ++i) {
      TimePair tp = sample_time_pair(cfg.time, rng);
      r[i] = tp.r;
      t[i] = tp.t;
    }

    Tensor z_t = Tensor::zeros({cfg.batch, d});
    Tensor tangent = Tensor::zeros({cfg.batch, d});
    for (std::size_t i = 0; i < cfg.batch; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double xi = x.at(i, j), zi = z.at(i, j);
        z_t.at(i, j) = (1.0 - t[i]) * xi + t[i] * zi;
        tangent.at(i, j) = zi - xi;
      }

    // Realize v(z_t, t).
    Tensor velocity;
    if (cfg.velocity_source == VelocitySource::kConditional)
      velocity = tangent;
    else
      velocity = cfg.frozen_flow->velocity(z_t, t, cls);

    bool guided = step >= guided_from;
    if (guided) {
      // Mix in the model's own mean-velocity predictions at r = t; all
      // three terms are treated as constants.
      Tensor u_cond = model.mean_velocity(z_t, t, t, &cls_kept);
      std::vector<int> uncond(cfg.batch, -1);
      Tensor u_uncond = model.mean_velocity(z_t, t, t, &uncond);
      Tensor mixed = Tensor::zeros(velocity.shape);
      for (std::size_t i = 0; i < cfg.batch; ++i) {
        double omega, kappa;
        cfg.cfg->resolve(
            rng.uniform(cfg.cfg->omega_prime_lo, cfg.cfg->omega_prime_hi),
            &omega, &kappa);
        double w3 = 1.0 - omega + kappa;
        for (std::size_t j = 0; j < d; ++j)
          mixed.at(i, j) = omega * velocity.at(i, j) +
                           kappa * u_cond.at(i, j) + w3 * u_uncond.at(i, j);
      }
      velocity = std::move(mixed);
    }

    Tensor u_tgt = meanflow_target(model, z_t, tangent, r, t, cls, velocity);
    Tensor u_pred = model.mean_velocity(z_t, r, t, cls);
    AdaptiveLossResult al =
        adaptive_loss(u_pred, u_tgt, cfg.loss_p, cfg.loss_c);
    if (!std::isfinite(al.loss))
      fail("train_meanflow: non-finite loss at step " + std::to_string(step));
    result.loss_trace.push_back(al.loss);

    Tensor upstream = Tensor::zeros(u_pred.shape);
    double inv_b = 1.0 / static_cast<double>(cfg.batch);
    for (std::size_t i = 0; i < cfg.batch; ++i)
      for (std::size_t j = 0; j < d; ++j)
        upstream.at(i, j) = 2.0 * al.weights[i] *
                            (u_pred.at(i, j) - u_tgt.at(i, j)) * inv_b;

    Tensor in = assemble_net_input(z_t, {&r, &t}, model.num_classes, cls);
    MlpGradients grads = mlp_backward(model.net, in, upstream);
    opt.step(model.net, grads);
    if (ledger) ledger->add_train_step(phase);
    if (cfg.snapshot_every > 0 && cfg.snapshot_cb &&
        (step + 1) % cfg.snapshot_every == 0)
      cfg.snapshot_cb(model, step + 1);
  }
  result.model = std::move(model);
  return result;
}

Tensor one_step_sample(const MeanFlowModel& model, const Tensor& z,
                       const std::vector<int>* cls, BudgetLedger* ledger) {
  model.validate();
  std::vector<double> r(z.rows(), 0.0), t(z.rows(), 1.0);
  Tensor u = model.mean_velocity(z, r, t, cls);
  if (ledger) ledger->add_forward(Phase::kEval, z.rows());
  Tensor out = z;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= u.values[i];
  return out;
}

Tensor mean_velocity_quadrature_oracle(const FlowModel& flow,
                                       const Tensor& z_start, double r,
                                       double t, std::size_t n_quad,
                                       const std::vector<int>* cls) {
  if (!(r < t)) fail("mean_velocity_quadrature_oracle: need r < t");
  if (n_quad < 2) fail("mean_velocity_quadrature_oracle: n_quad must be >= 2");
  flow.validate();
  double h = (t - r) / static_cast<double>(n_quad);
  Tensor state = z_start;
  Tensor acc = Tensor::zeros(z_start.shape);
  double tau = t;
  for (std::size_t s = 0; s < n_quad; ++s) {
    Tensor v = flow.velocity_at(state, tau, cls);
    v.require_finite("mean_velocity_quadrature_oracle velocity");
    for (std::size_t i = 0; i < state.size(); ++i) {
      acc.values[i] += v.values[i];
      state.values[i] -= h * v.values[i];
    }
    tau -= h;
  }
  for (double& v : acc.values) v /= static_cast<double>(n_quad);
  return acc;
}

}  // namespace rmf
