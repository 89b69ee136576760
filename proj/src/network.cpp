#include "datagrad/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace datagrad {

namespace {

std::string layer_name(std::size_t l) { return "layer " + std::to_string(l + 1); }

}  // namespace

void NetworkParams::validate() const {
  if (layer_sizes.size() < 2) throw InvalidArgument("network needs at least 2 layer sizes");
  const std::size_t k = layer_sizes.size() - 1;
  if (weights.size() != k || biases.size() != k)
    throw InvalidArgument("network: expected " + std::to_string(k) +
                          " weight matrices and bias vectors");
  for (std::size_t l = 0; l < k; ++l) {
    if (weights[l].rows() != layer_sizes[l + 1] || weights[l].cols() != layer_sizes[l])
      throw InvalidArgument("network: " + layer_name(l) + " weight shape mismatch");
    if (biases[l].size() != layer_sizes[l + 1])
      throw InvalidArgument("network: " + layer_name(l) + " bias length mismatch");
    if (!all_finite(weights[l].span()) || !all_finite(biases[l].span()))
      throw InvalidArgument("network: " + layer_name(l) + " has non-finite parameters");
  }
}

NetworkParams init_he(std::span<const std::size_t> layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2)
    throw InvalidArgument("init_he: need at least an input and an output layer");
  if (std::any_of(layer_sizes.begin(), layer_sizes.end(), [](std::size_t s) { return s == 0; }))
    throw InvalidArgument("init_he: layer sizes must be >= 1");

  NetworkParams params;
  params.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());
  params.seed = seed;

  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const std::size_t fan_in = layer_sizes[l];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    Matrix w(layer_sizes[l + 1], fan_in);
    for (double& v : w.span()) v = dist(rng);
    params.weights.push_back(std::move(w));
    params.biases.emplace_back(layer_sizes[l + 1]);
  }
  return params;
}

Vector softmax(const Vector& logits) {
  if (logits.empty()) throw InvalidArgument("softmax: empty logits");
  const double shift = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - shift);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

ForwardTrace forward(const NetworkParams& params, const Vector& input) {
  if (input.size() != params.input_dim())
    throw InvalidArgument("forward: input has " + std::to_string(input.size()) +
                          " entries, network expects " + std::to_string(params.input_dim()));
  const std::size_t k = params.num_layers();
  ForwardTrace trace;
  trace.preactivations.reserve(k);
  trace.activations.reserve(k + 1);
  trace.activations.push_back(input);

  for (std::size_t l = 0; l < k; ++l) {
    Vector h = matmul(params.weights[l], trace.activations.back());
    axpy(1.0, params.biases[l], h);
    if (l + 1 < k) {
      Vector a(h.size());
      for (std::size_t i = 0; i < h.size(); ++i) a[i] = relu(h[i]);
      trace.activations.push_back(std::move(a));
    } else {
      trace.prediction = softmax(h);
      trace.activations.push_back(trace.prediction);
    }
    trace.preactivations.push_back(std::move(h));
  }
  return trace;
}

double cross_entropy_loss(const Vector& prediction, Label label) {
  if (label >= prediction.size())
    throw InvalidArgument("cross_entropy_loss: label " + std::to_string(label) +
                          " out of range for " + std::to_string(prediction.size()) + " classes");
  return -std::log(std::max(prediction[label], 1e-300));
}

BackpropResult backward(const NetworkParams& params, const ForwardTrace& trace,
                        Label label) {
  const std::size_t k = params.num_layers();
  if (trace.preactivations.size() != k || trace.activations.size() != k + 1 ||
      trace.prediction.size() != params.output_dim())
    throw InvalidArgument("backward: trace does not belong to this network");
  for (std::size_t l = 0; l < k; ++l)
    if (trace.preactivations[l].size() != params.layer_sizes[l + 1])
      throw InvalidArgument("backward: trace does not belong to this network");
  if (label >= params.output_dim())
    throw InvalidArgument("backward: label " + std::to_string(label) + " out of range");

  BackpropResult result;
  result.douts.resize(k);
  result.weight_grads.reserve(k);
  result.bias_grads.resize(k);

  // dL/dh_K for softmax + cross-entropy.
  Vector top = trace.prediction;
  top[label] -= 1.0;
  result.douts[k - 1] = std::move(top);

  for (std::size_t l = k - 1; l-- > 0;) {
    const Vector& h = trace.preactivations[l];
    Vector mask(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) mask[i] = relu_deriv(h[i]);
    result.douts[l] = hadamard(matmul_transpose(params.weights[l + 1], result.douts[l + 1]), mask);
  }

  result.data_gradient = matmul_transpose(params.weights[0], result.douts[0]);

  for (std::size_t l = 0; l < k; ++l) {
    result.weight_grads.push_back(outer(result.douts[l], trace.activations[l]));
    result.bias_grads[l] = result.douts[l];
  }
  return result;
}

// ---------------------------------------------------------------------------

void softmax_rows(Matrix& logits) {
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double shift = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double& v : row) {
      v = std::exp(v - shift);
      total += v;
    }
    for (double& v : row) v /= total;
  }
}

BatchTrace forward_batch(const NetworkParams& params, const Matrix& inputs) {
  if (inputs.cols() != params.input_dim())
    throw InvalidArgument("forward_batch: inputs have " + std::to_string(inputs.cols()) +
                          " columns, network expects " + std::to_string(params.input_dim()));
  const std::size_t k = params.num_layers();
  BatchTrace trace;
  trace.preactivations.reserve(k);
  trace.activations.reserve(k + 1);
  trace.activations.push_back(inputs);

  for (std::size_t l = 0; l < k; ++l) {
    Matrix h = gemm_nt(trace.activations.back(), params.weights[l]);
    add_row_vector(params.biases[l], h);
    Matrix a = h;
    if (l + 1 < k) {
      for (double& v : a.span()) v = relu(v);
    } else {
      softmax_rows(a);
    }
    trace.preactivations.push_back(std::move(h));
    trace.activations.push_back(std::move(a));
  }
  return trace;
}

Matrix softmax_residual(const Matrix& probabilities, std::span<const Label> labels) {
  if (labels.size() != probabilities.rows())
    throw InvalidArgument("softmax_residual: " + std::to_string(labels.size()) +
                          " labels for " + std::to_string(probabilities.rows()) + " rows");
  Matrix delta = probabilities;
  for (std::size_t r = 0; r < delta.rows(); ++r) {
    if (labels[r] >= delta.cols())
      throw InvalidArgument("softmax_residual: label " + std::to_string(labels[r]) +
                            " out of range");
    delta(r, labels[r]) -= 1.0;
  }
  return delta;
}

BatchGradients backward_batch(const NetworkParams& params, const BatchTrace& trace,
                              const Matrix& output_delta, const BackwardOptions& options) {
  const std::size_t k = params.num_layers();
  if (trace.preactivations.size() != k || trace.activations.size() != k + 1)
    throw InvalidArgument("backward_batch: trace does not belong to this network");
  const std::size_t n = trace.activations.front().rows();
  if (output_delta.rows() != n || output_delta.cols() != params.output_dim())
    throw InvalidArgument("backward_batch: output delta shape mismatch");
  if (options.penultimate_extra != nullptr) {
    if (k < 2) throw InvalidArgument("backward_batch: no hidden layer for the extra gradient");
    if (options.penultimate_extra->rows() != n ||
        options.penultimate_extra->cols() != params.layer_sizes[k - 1])
      throw InvalidArgument("backward_batch: penultimate gradient shape mismatch");
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  BatchGradients grads;
  if (options.want_weight_grads) {
    grads.weight_grads.resize(k, Matrix(1, 1));
    grads.bias_grads.resize(k);
  }

  Matrix dout = output_delta;
  for (std::size_t l = k; l-- > 0;) {
    if (options.want_weight_grads) {
      Matrix gw = gemm_tn(dout, trace.activations[l]);
      scale(inv_n, gw);
      Vector gb = column_sums(dout);
      scale(inv_n, gb);
      grads.weight_grads[l] = std::move(gw);
      grads.bias_grads[l] = std::move(gb);
    }

    if (l == 0) {
      if (options.want_data_gradient) grads.data_gradient = gemm(dout, params.weights[0]);
      break;
    }
    Matrix below = gemm(dout, params.weights[l]);
    if (l == k - 1 && options.penultimate_extra != nullptr)
      axpy(1.0, *options.penultimate_extra, below);
    const Matrix& h = trace.preactivations[l - 1];
    const double* hp = h.data();
    double* bp = below.data();
    for (std::size_t i = 0; i < below.size(); ++i) bp[i] *= relu_deriv(hp[i]);
    dout = std::move(below);
  }
  return grads;
}

double mean_cross_entropy(const Matrix& probabilities, std::span<const Label> labels) {
  if (labels.size() != probabilities.rows())
    throw InvalidArgument("mean_cross_entropy: label count mismatch");
  double total = 0.0;
  for (std::size_t r = 0; r < probabilities.rows(); ++r)
    total += -std::log(std::max(probabilities(r, labels[r]), 1e-300));
  return total / static_cast<double>(probabilities.rows());
}

Label argmax(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("argmax: empty input");
  return static_cast<Label>(std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace datagrad
