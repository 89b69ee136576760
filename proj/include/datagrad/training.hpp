#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "datagrad/data.hpp"
#include "datagrad/datagrad.hpp"
#include "datagrad/multitask.hpp"

namespace datagrad {

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;       // percent, measured during the epoch
  std::optional<double> validation_accuracy;  // percent; empty without a validation set
  double seconds = 0.0;
};

struct TrainOutcome {
  NetworkParams net;                 // parameters of the selected epoch
  std::optional<OutputHead> aux;     // rotation head, multi-task only
  std::size_t best_epoch = 0;        // 0 when no epoch ran
  std::optional<double> best_validation_accuracy;
  std::vector<EpochStats> history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Seed of the shuffle for a given epoch.
std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) noexcept;

/// Mini-batch training of a single network. After every epoch the model is
/// scored on `validation`; the returned parameters are those of the epoch with
/// the best validation accuracy (earliest on ties), or the last epoch when the
/// validation set is empty. A NumericalError is rethrown with the epoch and
/// batch at which it occurred.
TrainOutcome train_network(const TrainConfig& cfg, std::span<const std::size_t> layer_sizes,
                           const Dataset& train, const Dataset& validation,
                           const EpochCallback& on_epoch = {});

/// Same for the dual-head model; `train` must carry rotation labels.
TrainOutcome train_multitask(const TrainConfig& cfg, std::span<const std::size_t> layer_sizes,
                             const Dataset& train, const Dataset& validation,
                             const EpochCallback& on_epoch = {});

}  // namespace datagrad
