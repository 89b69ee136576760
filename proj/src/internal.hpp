#pragma once

// Helpers shared by the single-task and multi-task update code.

#include <span>
#include <string>

#include "datagrad/datagrad.hpp"

namespace datagrad::detail {

inline double sign(double x) noexcept { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

inline void immediate_gradient_into(RegularizerKind kind, std::span<const double> x,
                                    std::span<double> out) noexcept {
  if (kind == RegularizerKind::L1) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = sign(x[i]);
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 2.0 * x[i];
  }
}

inline void require_finite(std::span<const double> values, const std::string& what,
                           std::size_t layer) {
  if (!all_finite(values))
    throw NumericalError(what + " is not finite at layer " + std::to_string(layer + 1));
}

/// inputs + t * immediate_gradient(kind, row) for every row.
inline Matrix perturb_rows(const Matrix& inputs, const Matrix& data_gradient,
                           RegularizerKind kind, double t) {
  Matrix out = inputs;
  std::vector<double> y(data_gradient.cols());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    immediate_gradient_into(kind, data_gradient.row(r), y);
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += t * y[c];
  }
  return out;
}

/// dir = lambda0 * xi + lambda1 * (omega - xi_reg) / t, or lambda0 * xi when
/// `omega` is empty. `xi_reg` is the gradient of the regularized loss at d.
inline void combine(const TrainConfig& cfg, std::span<const double> xi,
                    std::span<const double> xi_reg, std::span<const double> omega,
                    std::span<double> dir) {
  if (omega.empty()) {
    for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = cfg.lambda0 * xi[i];
    return;
  }
  for (std::size_t i = 0; i < dir.size(); ++i)
    dir[i] = cfg.lambda0 * xi[i] + cfg.lambda1 * ((omega[i] - xi_reg[i]) / cfg.fd_step);
}

/// L2: dir += 2 * lambda * W. L1: dir += lambda * sign(W).
inline void add_weight_penalty(const TrainConfig& cfg, std::span<const double> weights,
                               std::span<double> dir) {
  if (!cfg.weight_penalty || !(cfg.weight_penalty->coefficient > 0.0)) return;
  const double c = cfg.weight_penalty->coefficient;
  if (cfg.weight_penalty->kind == RegularizerKind::L2) {
    for (std::size_t i = 0; i < dir.size(); ++i) dir[i] += c * 2.0 * weights[i];
  } else {
    for (std::size_t i = 0; i < dir.size(); ++i) dir[i] += c * sign(weights[i]);
  }
}

}  // namespace datagrad::detail
