#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "datagrad/tensor.hpp"

namespace datagrad {

using Label = std::size_t;

/// Parameters of a K-layer rectifier network.
///
/// `layer_sizes` lists every layer including the input, so K = layer_sizes.size() - 1.
/// `weights[l]` maps layer l to layer l+1 (shape layer_sizes[l+1] x layer_sizes[l]);
/// W_1 is weights[0].
struct NetworkParams {
  std::vector<std::size_t> layer_sizes;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  std::uint64_t seed = 0;

  std::size_t num_layers() const noexcept { return weights.size(); }
  std::size_t input_dim() const noexcept { return layer_sizes.front(); }
  std::size_t output_dim() const noexcept { return layer_sizes.back(); }

  /// Throws InvalidArgument if shapes disagree with layer_sizes or a weight is not finite.
  void validate() const;

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

/// Extra softmax head attached to the last hidden layer (the rotation head of a
/// multi-task model).
struct OutputHead {
  Matrix weights{1, 1};
  Vector bias;

  friend bool operator==(const OutputHead&, const OutputHead&) = default;
};

/// He initialisation: W ~ N(0, 2 / fan_in), zero biases. Deterministic in `seed`.
NetworkParams init_he(std::span<const std::size_t> layer_sizes, std::uint64_t seed);

inline double relu(double z) noexcept { return z > 0.0 ? z : 0.0; }
/// Subgradient 0 at exactly 0.
inline double relu_deriv(double z) noexcept { return z > 0.0 ? 1.0 : 0.0; }

/// Max-shifted softmax.
Vector softmax(const Vector& logits);

struct ForwardTrace {
  std::vector<Vector> preactivations;  // h_1..h_K
  std::vector<Vector> activations;     // a_0..a_K, a_0 is the input, a_K the prediction
  Vector prediction;
};

struct BackpropResult {
  std::vector<Vector> douts;  // dout_1..dout_K
  std::vector<Matrix> weight_grads;
  std::vector<Vector> bias_grads;
  Vector data_gradient;  // dout_0 = W_1^T dout_1
};

ForwardTrace forward(const NetworkParams& params, const Vector& input);

/// -log(prediction[label]), with prediction[label] floored at 1e-300.
double cross_entropy_loss(const Vector& prediction, Label label);

/// Backward pass for softmax + cross-entropy, computing dout_l from the top
/// layer down.
BackpropResult backward(const NetworkParams& params, const ForwardTrace& trace,
                        Label label);

// ---------------------------------------------------------------------------
// Batched pass. Inputs carry one sample per row; all layer matrices follow the
// same layout (rows = samples).

struct BatchTrace {
  std::vector<Matrix> preactivations;  // K entries, n x layer_sizes[l+1]
  std::vector<Matrix> activations;     // K+1 entries, last holds softmax probabilities
};

struct BatchGradients {
  std::vector<Matrix> weight_grads;  // batch means
  std::vector<Vector> bias_grads;    // batch means
  std::optional<Matrix> data_gradient;  // per sample, n x input_dim
};

struct BackwardOptions {
  bool want_data_gradient = true;
  /// When false, weight_grads and bias_grads are left empty.
  bool want_weight_grads = true;
  /// Extra gradient with respect to the last hidden activation (n x
  /// layer_sizes[K-1]), added before the ReLU mask. Used for auxiliary heads.
  const Matrix* penultimate_extra = nullptr;
};

BatchTrace forward_batch(const NetworkParams& params, const Matrix& inputs);

/// prediction - onehot(label), row by row.
Matrix softmax_residual(const Matrix& probabilities, std::span<const Label> labels);

/// Backpropagates `output_delta` (dL/dh_K per sample). Weight and bias
/// gradients are averaged over the rows.
BatchGradients backward_batch(const NetworkParams& params, const BatchTrace& trace,
                              const Matrix& output_delta,
                              const BackwardOptions& options = {});

/// Row-wise softmax in place.
void softmax_rows(Matrix& logits);

/// Mean cross-entropy of a batch of probabilities.
double mean_cross_entropy(const Matrix& probabilities, std::span<const Label> labels);

/// Index of the largest entry; the first one wins ties.
Label argmax(std::span<const double> values);

}  // namespace datagrad
