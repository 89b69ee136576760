#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "datagrad/batch.hpp"
#include "datagrad/datagrad.hpp"
#include "datagrad/network.hpp"

namespace datagrad {

inline constexpr std::size_t kDigitClasses = 10;
inline constexpr std::size_t kRotationClasses = 5;

/// Dual-head rectifier network. `net` holds the shared hidden layers plus the
/// digit head U_0 as its final layer, so it can be evaluated or attacked like
/// any single-task network. `aux` is the rotation head U_1, reading the same
/// last hidden layer as U_0.
struct MultiTaskParams {
  NetworkParams net;
  OutputHead aux;

  const Matrix& digit_head_weights() const { return net.weights.back(); }
  const Matrix& rotation_head_weights() const { return aux.weights; }

  void validate() const;
  friend bool operator==(const MultiTaskParams&, const MultiTaskParams&) = default;
};

/// He-initialised trunk and digit head from `layer_sizes` (which must have at
/// least one hidden layer), plus an auxiliary head with `aux_classes` outputs.
MultiTaskParams init_multitask(std::span<const std::size_t> layer_sizes, std::size_t aux_classes,
                               std::uint64_t seed);

struct MultiTaskGradients {
  ParamGradients net;  // gradient of L_0 + gamma * L_1 for trunk and digit head
  OutputHead aux;      // gradient of gamma * L_1 for the rotation head
  Matrix data_gradient{1, 1};// dL_0/dd only, one row per sample
  double digit_loss = 0.0;
  double rotation_loss = 0.0;
};

/// Combined forward/backward for one sample. The returned data gradient
/// belongs to the digit loss alone.
MultiTaskGradients multitask_forward_backward(const MultiTaskParams& mt, const Vector& d,
                                              Label digit, Label rotation,
                                              const TrainConfig& cfg);

/// Batched version of the above (batch means for parameter gradients).
MultiTaskGradients multitask_gradients(const MultiTaskParams& mt, const Batch& batch,
                                       const TrainConfig& cfg);

struct MultiTaskStepBreakdown {
  ParamGradients xi;                     // combined gradient at d (trunk + digit head)
  ParamGradients xi_digit;               // digit-loss gradient at d
  std::optional<ParamGradients> omega;   // digit-loss gradient at d + t*y
  OutputHead aux_xi;                     // rotation-head gradient at d
  ParamGradients direction;              // net -= eta * direction
  OutputHead aux_direction;              // aux -= eta * aux_direction
  double digit_loss = 0.0;
  double rotation_loss = 0.0;
  std::size_t correct = 0;  // digit-head argmax hits
};

/// Update direction: lambda0 * xi + lambda1 * (omega - xi_digit) / t for the
/// trunk and digit head; lambda0 * aux_xi for the rotation head. The data
/// gradient regularizer only sees the digit loss.
MultiTaskStepBreakdown multitask_step_gradients(const MultiTaskParams& mt, const Batch& batch,
                                                const TrainConfig& cfg);

MultiTaskParams multitask_datagrad_step(MultiTaskParams mt, const Batch& batch,
                                        const TrainConfig& cfg,
                                        MultiTaskStepBreakdown* breakdown = nullptr);

}  // namespace datagrad
