#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "datagrad/batch.hpp"
#include "datagrad/network.hpp"

namespace datagrad {

/// Penalty applied to a data gradient (or, for baselines, to the weights).
enum class RegularizerKind { L1, L2 };

std::string_view to_string(RegularizerKind kind) noexcept;
/// Accepts "l1"/"L1"/"l2"/"L2".
RegularizerKind parse_regularizer(std::string_view text);

/// L1: sum |x_i|. L2: sum x_i^2 (squared norm, no square root).
double reg_value(RegularizerKind kind, const Vector& x);

/// Gradient of the penalty with respect to its own inputs:
/// L1 -> sign(x) with sign(0) = 0, L2 -> 2x.
Vector immediate_gradient(RegularizerKind kind, const Vector& x);

/// The direction y along which the input is perturbed. For L1 this is the
/// fast gradient sign direction.
Vector adversarial_direction(RegularizerKind kind, const Vector& data_gradient);

/// d + phi * y, without clipping.
Vector make_adversarial(const Vector& d, const Vector& y, double phi);

/// Classical penalty on the weights, used by the L1/L2 baselines.
struct WeightPenalty {
  RegularizerKind kind = RegularizerKind::L2;
  double coefficient = 0.0;

  friend bool operator==(const WeightPenalty&, const WeightPenalty&) = default;
};

struct TrainConfig {
  double eta = 0.1;       // step size
  double lambda0 = 1.0;   // weight on the task loss
  double lambda1 = 0.0;   // weight on the data-gradient penalty; 0 disables DataGrad
  double fd_step = 0.05;  // t, the finite-difference step used to form d + t*y
  RegularizerKind reg_kind = RegularizerKind::L1;
  std::optional<WeightPenalty> weight_penalty;
  std::size_t batch_size = 100;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  double gamma = 0.0;  // auxiliary-task weight (multi-task only)

  /// Throws InvalidArgument when a field is out of range.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// One gradient (or update direction) per layer, shaped like NetworkParams.
struct ParamGradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static ParamGradients zeros_like(const NetworkParams& params);
  friend bool operator==(const ParamGradients&, const ParamGradients&) = default;
};

/// Finite-difference estimate of d R(J_L) / dTheta for one sample:
/// (grad_Theta L(d + t*y) - grad_Theta L(d)) / t with y the adversarial
/// direction at d. Costs two forward and two backward passes.
/// Throws NumericalError naming the layer if a non-finite value appears.
ParamGradients fd_regularizer_grad(const NetworkParams& params, const Vector& d, Label label,
                                   const TrainConfig& cfg);

/// Everything that went into one mini-batch update.
struct StepBreakdown {
  ParamGradients xi;                    // batch-mean loss gradient at d
  std::optional<ParamGradients> omega;  // batch-mean loss gradient at d + t*y (DataGrad only)
  ParamGradients direction;             // params -= eta * direction
  double loss = 0.0;                    // batch-mean loss at d
  std::size_t correct = 0;              // argmax hits at d
};

/// Computes the DataGrad update direction for a batch:
///   lambda0 * xi + lambda1 * (omega - xi) / t  [+ weight penalty]
/// where xi/omega are batch means. With lambda1 == 0 the second pass is skipped.
StepBreakdown datagrad_gradients(const NetworkParams& params, const Batch& batch,
                                 const TrainConfig& cfg);

/// params -= eta * direction. Throws NumericalError naming the layer if the
/// result is not finite; `params` is left untouched in that case.
void apply_update(NetworkParams& params, const ParamGradients& direction, double eta);

/// One DataGrad SGD step.
NetworkParams datagrad_step(NetworkParams params, const Batch& batch, const TrainConfig& cfg,
                            StepBreakdown* breakdown = nullptr);

}  // namespace datagrad
