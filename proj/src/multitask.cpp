#include "datagrad/multitask.hpp"

#include <string>

#include "internal.hpp"

namespace datagrad {

using detail::require_finite;

namespace {

struct MultiTaskTrace {
  BatchTrace trunk;  // trunk + digit head
  Matrix rotation_probs;
};

MultiTaskTrace multitask_forward(const MultiTaskParams& mt, const Matrix& inputs) {
  MultiTaskTrace t{forward_batch(mt.net, inputs), Matrix(1, 1)};
  const Matrix& hidden = t.trunk.activations[mt.net.num_layers() - 1];
  Matrix logits = gemm_nt(hidden, mt.aux.weights);
  add_row_vector(mt.aux.bias, logits);
  softmax_rows(logits);
  t.rotation_probs = std::move(logits);
  return t;
}

void check_batch(const MultiTaskParams& mt, const Batch& batch) {
  if (batch.size() == 0) throw InvalidArgument("multi-task step: empty batch");
  if (batch.inputs.rows() != batch.size())
    throw InvalidArgument("multi-task step: batch inputs and labels disagree");
  if (batch.aux_labels.size() != batch.size())
    throw InvalidArgument("multi-task step: every sample needs a rotation label");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.labels[i] >= mt.net.output_dim())
      throw InvalidArgument("multi-task step: digit label " + std::to_string(batch.labels[i]) +
                            " out of range");
    if (batch.aux_labels[i] >= mt.aux.weights.rows())
      throw InvalidArgument("multi-task step: rotation label " +
                            std::to_string(batch.aux_labels[i]) + " out of range");
  }
}

/// Gradients of L_0 + gamma * L_1 at the traced inputs, plus the digit-only
/// backward pass when `want_digit_only` is set (needed for the data gradient of
/// L_0 and for the finite-difference term whenever gamma > 0).
struct CombinedPass {
  BatchGradients combined;
  std::optional<BatchGradients> digit_only;
  OutputHead aux_grad;
};

CombinedPass combined_backward(const MultiTaskParams& mt, const MultiTaskTrace& trace,
                               const Batch& batch, double gamma, bool want_digit_only) {
  const std::size_t k = mt.net.num_layers();
  const std::size_t n = batch.size();
  const Matrix delta0 = softmax_residual(trace.trunk.activations.back(), batch.labels);

  CombinedPass out{BatchGradients{}, std::nullopt,
                   OutputHead{Matrix(mt.aux.weights.rows(), mt.aux.weights.cols()),
                              Vector(mt.aux.bias.size())}};
  if (gamma == 0.0) {
    // The auxiliary head does not touch the objective.
    out.combined = backward_batch(mt.net, trace.trunk, delta0,
                                  {.want_data_gradient = want_digit_only});
    return out;
  }

  Matrix delta1 = softmax_residual(trace.rotation_probs, batch.aux_labels);
  scale(gamma, delta1);
  const Matrix extra = gemm(delta1, mt.aux.weights);
  out.combined = backward_batch(mt.net, trace.trunk, delta0,
                                {.want_data_gradient = false, .penultimate_extra = &extra});

  const double inv_n = 1.0 / static_cast<double>(n);
  out.aux_grad.weights = gemm_tn(delta1, trace.trunk.activations[k - 1]);
  scale(inv_n, out.aux_grad.weights);
  out.aux_grad.bias = column_sums(delta1);
  scale(inv_n, out.aux_grad.bias);

  if (want_digit_only)
    out.digit_only = backward_batch(mt.net, trace.trunk, delta0, {.want_data_gradient = true});
  return out;
}

}  // namespace

void MultiTaskParams::validate() const {
  net.validate();
  const std::size_t k = net.num_layers();
  if (k < 2) throw InvalidArgument("multi-task network needs at least one hidden layer");
  if (aux.weights.cols() != net.layer_sizes[k - 1])
    throw InvalidArgument("rotation head does not read the last hidden layer");
  if (aux.bias.size() != aux.weights.rows())
    throw InvalidArgument("rotation head bias length mismatch");
}

MultiTaskParams init_multitask(std::span<const std::size_t> layer_sizes, std::size_t aux_classes,
                               std::uint64_t seed) {
  if (layer_sizes.size() < 3)
    throw InvalidArgument("init_multitask: need input, at least one hidden layer, and output");
  if (aux_classes == 0) throw InvalidArgument("init_multitask: auxiliary head needs classes");
  MultiTaskParams mt{init_he(layer_sizes, seed), OutputHead{Matrix(1, 1), Vector()}};
  // Auxiliary head drawn from a separate stream so the trunk matches a
  // single-task network initialised with the same seed.
  const std::size_t hidden = layer_sizes[layer_sizes.size() - 2];
  const std::size_t aux_sizes[] = {hidden, aux_classes};
  NetworkParams head = init_he(aux_sizes, seed ^ 0x9E3779B97F4A7C15ULL);
  mt.aux = OutputHead{std::move(head.weights.front()), std::move(head.biases.front())};
  return mt;
}

MultiTaskGradients multitask_gradients(const MultiTaskParams& mt, const Batch& batch,
                                       const TrainConfig& cfg) {
  check_batch(mt, batch);
  const MultiTaskTrace trace = multitask_forward(mt, batch.inputs);
  CombinedPass pass = combined_backward(mt, trace, batch, cfg.gamma, true);

  MultiTaskGradients out;
  out.digit_loss = mean_cross_entropy(trace.trunk.activations.back(), batch.labels);
  out.rotation_loss = mean_cross_entropy(trace.rotation_probs, batch.aux_labels);
  out.data_gradient = pass.digit_only ? std::move(*pass.digit_only->data_gradient)
                                      : std::move(*pass.combined.data_gradient);
  out.net = ParamGradients{std::move(pass.combined.weight_grads),
                           std::move(pass.combined.bias_grads)};
  out.aux = std::move(pass.aux_grad);
  return out;
}

MultiTaskGradients multitask_forward_backward(const MultiTaskParams& mt, const Vector& d,
                                              Label digit, Label rotation,
                                              const TrainConfig& cfg) {
  if (digit >= kDigitClasses || digit >= mt.net.output_dim())
    throw InvalidArgument("digit label " + std::to_string(digit) + " out of range");
  if (rotation >= kRotationClasses || rotation >= mt.aux.weights.rows())
    throw InvalidArgument("rotation label " + std::to_string(rotation) + " out of range");
  const Vector inputs[] = {d};
  const Label digits[] = {digit};
  const Label rotations[] = {rotation};
  return multitask_gradients(mt, make_batch(inputs, digits, rotations), cfg);
}

MultiTaskStepBreakdown multitask_step_gradients(const MultiTaskParams& mt, const Batch& batch,
                                                const TrainConfig& cfg) {
  check_batch(mt, batch);
  const bool use_datagrad = cfg.lambda1 > 0.0;
  if (use_datagrad && !(cfg.fd_step > 0.0))
    throw InvalidArgument("multi-task step: fd_step must be > 0");

  const MultiTaskTrace trace = multitask_forward(mt, batch.inputs);
  CombinedPass pass = combined_backward(mt, trace, batch, cfg.gamma, use_datagrad);

  MultiTaskStepBreakdown out;
  const Matrix& probs = trace.trunk.activations.back();
  out.digit_loss = mean_cross_entropy(probs, batch.labels);
  out.rotation_loss = mean_cross_entropy(trace.rotation_probs, batch.aux_labels);
  for (std::size_t r = 0; r < batch.size(); ++r)
    if (argmax(probs.row(r)) == batch.labels[r]) ++out.correct;

  if (use_datagrad) {
    // The regularizer acts on the data gradient of the digit loss only.
    const BatchGradients& digit = pass.digit_only ? *pass.digit_only : pass.combined;
    const Matrix d_hat =
        detail::perturb_rows(batch.inputs, *digit.data_gradient, cfg.reg_kind, cfg.fd_step);
    const BatchTrace hat = forward_batch(mt.net, d_hat);
    BatchGradients gh = backward_batch(mt.net, hat,
                                       softmax_residual(hat.activations.back(), batch.labels),
                                       {.want_data_gradient = false});
    out.omega = ParamGradients{std::move(gh.weight_grads), std::move(gh.bias_grads)};
  }
  if (pass.digit_only) {
    out.xi_digit = ParamGradients{std::move(pass.digit_only->weight_grads),
                                  std::move(pass.digit_only->bias_grads)};
    out.xi = ParamGradients{std::move(pass.combined.weight_grads),
                            std::move(pass.combined.bias_grads)};
  } else {
    out.xi = ParamGradients{std::move(pass.combined.weight_grads),
                            std::move(pass.combined.bias_grads)};
    out.xi_digit = out.xi;
  }
  out.aux_xi = std::move(pass.aux_grad);

  out.direction = ParamGradients::zeros_like(mt.net);
  for (std::size_t l = 0; l < mt.net.num_layers(); ++l) {
    const auto om_w = out.omega ? out.omega->weights[l].span() : std::span<const double>{};
    const auto om_b = out.omega ? out.omega->biases[l].span() : std::span<const double>{};
    detail::combine(cfg, out.xi.weights[l].span(), out.xi_digit.weights[l].span(), om_w,
                    out.direction.weights[l].span());
    detail::combine(cfg, out.xi.biases[l].span(), out.xi_digit.biases[l].span(), om_b,
                    out.direction.biases[l].span());
    detail::add_weight_penalty(cfg, mt.net.weights[l].span(), out.direction.weights[l].span());
    require_finite(out.direction.weights[l].span(), "weight update", l);
    require_finite(out.direction.biases[l].span(), "bias update", l);
  }

  out.aux_direction = OutputHead{Matrix(mt.aux.weights.rows(), mt.aux.weights.cols()),
                                 Vector(mt.aux.bias.size())};
  detail::combine(cfg, out.aux_xi.weights.span(), {}, {}, out.aux_direction.weights.span());
  detail::combine(cfg, out.aux_xi.bias.span(), {}, {}, out.aux_direction.bias.span());
  detail::add_weight_penalty(cfg, mt.aux.weights.span(), out.aux_direction.weights.span());
  const std::size_t head_layer = mt.net.num_layers();
  require_finite(out.aux_direction.weights.span(), "rotation head update", head_layer);
  require_finite(out.aux_direction.bias.span(), "rotation head update", head_layer);
  return out;
}

MultiTaskParams multitask_datagrad_step(MultiTaskParams mt, const Batch& batch,
                                        const TrainConfig& cfg,
                                        MultiTaskStepBreakdown* breakdown) {
  MultiTaskStepBreakdown step = multitask_step_gradients(mt, batch, cfg);
  OutputHead aux = mt.aux;
  axpy(-cfg.eta, step.aux_direction.weights, aux.weights);
  axpy(-cfg.eta, step.aux_direction.bias, aux.bias);
  require_finite(aux.weights.span(), "updated rotation head", mt.net.num_layers());
  require_finite(aux.bias.span(), "updated rotation head", mt.net.num_layers());
  apply_update(mt.net, step.direction, cfg.eta);
  mt.aux = std::move(aux);
  if (breakdown) *breakdown = std::move(step);
  return mt;
}

}  // namespace datagrad
