#include "datagrad/datagrad.hpp"

#include <cmath>
#include <string>

#include "internal.hpp"

namespace datagrad {

using detail::require_finite;

std::string_view to_string(RegularizerKind kind) noexcept {
  return kind == RegularizerKind::L1 ? "l1" : "l2";
}

RegularizerKind parse_regularizer(std::string_view text) {
  if (text == "l1" || text == "L1") return RegularizerKind::L1;
  if (text == "l2" || text == "L2") return RegularizerKind::L2;
  throw InvalidArgument("unknown regularizer '" + std::string(text) + "' (expected l1 or l2)");
}

double reg_value(RegularizerKind kind, const Vector& x) {
  double total = 0.0;
  if (kind == RegularizerKind::L1) {
    for (double v : x) total += std::abs(v);
  } else {
    for (double v : x) total += v * v;
  }
  return total;
}

Vector immediate_gradient(RegularizerKind kind, const Vector& x) {
  Vector out(x.size());
  detail::immediate_gradient_into(kind, x.span(), out.span());
  return out;
}

Vector adversarial_direction(RegularizerKind kind, const Vector& data_gradient) {
  return immediate_gradient(kind, data_gradient);
}

Vector make_adversarial(const Vector& d, const Vector& y, double phi) {
  if (d.size() != y.size())
    throw InvalidArgument("make_adversarial: input has " + std::to_string(d.size()) +
                          " entries, direction has " + std::to_string(y.size()));
  Vector out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] + phi * y[i];
  return out;
}

void TrainConfig::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw InvalidArgument("eta must be finite and >= 0");
  if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) throw InvalidArgument("lambda0 must be >= 0");
  if (!(lambda1 >= 0.0) || !std::isfinite(lambda1)) throw InvalidArgument("lambda1 must be >= 0");
  if (!(fd_step > 0.0) || !std::isfinite(fd_step))
    throw InvalidArgument("fd_step must be finite and > 0");
  if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw InvalidArgument("gamma must be >= 0");
  if (weight_penalty && !(weight_penalty->coefficient >= 0.0))
    throw InvalidArgument("weight penalty coefficient must be >= 0");
}

ParamGradients ParamGradients::zeros_like(const NetworkParams& params) {
  ParamGradients g;
  for (const auto& w : params.weights) g.weights.emplace_back(w.rows(), w.cols());
  for (const auto& b : params.biases) g.biases.emplace_back(b.size());
  return g;
}

ParamGradients fd_regularizer_grad(const NetworkParams& params, const Vector& d, Label label,
                                   const TrainConfig& cfg) {
  if (!(cfg.fd_step > 0.0)) throw InvalidArgument("fd_regularizer_grad: fd_step must be > 0");

  // Pass 1: loss gradients and data gradient at d.
  const BackpropResult xi = backward(params, forward(params, d), label);
  // Adversarial direction and the perturbed input.
  const Vector y = adversarial_direction(cfg.reg_kind, xi.data_gradient);
  const Vector d_hat = make_adversarial(d, y, cfg.fd_step);
  // Pass 2: loss gradients at d_hat, same weights.
  const BackpropResult omega = backward(params, forward(params, d_hat), label);

  ParamGradients out;
  const double inv_t = 1.0 / cfg.fd_step;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    Matrix w = omega.weight_grads[l];
    axpy(-1.0, xi.weight_grads[l], w);
    scale(inv_t, w);
    require_finite(w.span(), "regularizer weight gradient", l);
    Vector b = omega.bias_grads[l];
    axpy(-1.0, xi.bias_grads[l], b);
    scale(inv_t, b);
    require_finite(b.span(), "regularizer bias gradient", l);
    out.weights.push_back(std::move(w));
    out.biases.push_back(std::move(b));
  }
  return out;
}

StepBreakdown datagrad_gradients(const NetworkParams& params, const Batch& batch,
                                 const TrainConfig& cfg) {
  if (batch.size() == 0) throw InvalidArgument("datagrad step: empty batch");
  if (batch.inputs.rows() != batch.size())
    throw InvalidArgument("datagrad step: batch inputs and labels disagree");
  const bool use_datagrad = cfg.lambda1 > 0.0;
  if (use_datagrad && !(cfg.fd_step > 0.0))
    throw InvalidArgument("datagrad step: fd_step must be > 0");

  StepBreakdown out;
  const BatchTrace trace = forward_batch(params, batch.inputs);
  const Matrix& probs = trace.activations.back();
  out.loss = mean_cross_entropy(probs, batch.labels);
  for (std::size_t r = 0; r < batch.size(); ++r)
    if (argmax(probs.row(r)) == batch.labels[r]) ++out.correct;

  BatchGradients g = backward_batch(params, trace, softmax_residual(probs, batch.labels),
                                    {.want_data_gradient = use_datagrad});
  if (use_datagrad) {
    const Matrix d_hat =
        detail::perturb_rows(batch.inputs, *g.data_gradient, cfg.reg_kind, cfg.fd_step);
    const BatchTrace hat = forward_batch(params, d_hat);
    BatchGradients gh = backward_batch(params, hat,
                                       softmax_residual(hat.activations.back(), batch.labels),
                                       {.want_data_gradient = false});
    out.omega = ParamGradients{std::move(gh.weight_grads), std::move(gh.bias_grads)};
  }
  out.xi = ParamGradients{std::move(g.weight_grads), std::move(g.bias_grads)};

  out.direction = ParamGradients::zeros_like(params);
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    const auto om_w = out.omega ? out.omega->weights[l].span() : std::span<const double>{};
    const auto om_b = out.omega ? out.omega->biases[l].span() : std::span<const double>{};
    detail::combine(cfg, out.xi.weights[l].span(), out.xi.weights[l].span(), om_w,
                    out.direction.weights[l].span());
    detail::combine(cfg, out.xi.biases[l].span(), out.xi.biases[l].span(), om_b,
                    out.direction.biases[l].span());
    detail::add_weight_penalty(cfg, params.weights[l].span(), out.direction.weights[l].span());
    require_finite(out.direction.weights[l].span(), "weight update", l);
    require_finite(out.direction.biases[l].span(), "bias update", l);
  }
  return out;
}

void apply_update(NetworkParams& params, const ParamGradients& direction, double eta) {
  const std::size_t k = params.num_layers();
  if (direction.weights.size() != k || direction.biases.size() != k)
    throw InvalidArgument("apply_update: gradient does not match the network");
  std::vector<Matrix> weights = params.weights;
  std::vector<Vector> biases = params.biases;
  for (std::size_t l = 0; l < k; ++l) {
    axpy(-eta, direction.weights[l], weights[l]);
    axpy(-eta, direction.biases[l], biases[l]);
    require_finite(weights[l].span(), "updated weights", l);
    require_finite(biases[l].span(), "updated biases", l);
  }
  params.weights = std::move(weights);
  params.biases = std::move(biases);
}

NetworkParams datagrad_step(NetworkParams params, const Batch& batch, const TrainConfig& cfg,
                            StepBreakdown* breakdown) {
  StepBreakdown step = datagrad_gradients(params, batch, cfg);
  apply_update(params, step.direction, cfg.eta);
  if (breakdown) *breakdown = std::move(step);
  return params;
}

}  // namespace datagrad
