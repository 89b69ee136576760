#include "datagrad/training.hpp"

#include <chrono>
#include <string>

#include "datagrad/errors.hpp"
#include "datagrad/robustness.hpp"

namespace datagrad {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Runs `epochs` passes of `step(batch)` and keeps the best-validation snapshot.
// Model is whatever the caller trains; `digit_net` exposes its digit path.
template <typename Model, typename Step, typename DigitNet>
TrainOutcome run_epochs(const TrainConfig& cfg, Model model, const Dataset& train,
                        const Dataset& validation, const EpochCallback& on_epoch, Step step,
                        DigitNet digit_net, std::optional<OutputHead> (*aux_of)(const Model&)) {
  if (train.empty()) throw InvalidArgument("training set is empty");
  train.validate();
  validation.validate();

  TrainOutcome outcome;
  outcome.net = digit_net(model);
  outcome.aux = aux_of(model);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto plan = batches(train.size(), cfg.batch_size, epoch_seed(cfg.seed, epoch));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const Batch batch = gather(train, plan[b]);
      try {
        const auto [loss, hits] = step(model, batch);
        loss_sum += loss * static_cast<double>(batch.size());
        correct += hits;
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + " batch " +
                             std::to_string(b + 1) + ": " + e.what());
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train.size());
    stats.train_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(train.size());
    if (!validation.empty()) stats.validation_accuracy = evaluate_accuracy(digit_net(model), validation);
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    outcome.history.push_back(stats);
    if (on_epoch) on_epoch(stats);

    const bool better = !stats.validation_accuracy || !outcome.best_validation_accuracy ||
                        *stats.validation_accuracy > *outcome.best_validation_accuracy;
    if (better) {
      outcome.best_epoch = epoch;
      outcome.best_validation_accuracy = stats.validation_accuracy;
      outcome.net = digit_net(model);
      outcome.aux = aux_of(model);
    }
  }
  return outcome;
}

}  // namespace

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) noexcept {
  return splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(epoch));
}

TrainOutcome train_network(const TrainConfig& cfg, std::span<const std::size_t> layer_sizes,
                           const Dataset& train, const Dataset& validation,
                           const EpochCallback& on_epoch) {
  cfg.validate();
  NetworkParams net = init_he(layer_sizes, cfg.seed);
  if (train.dim != net.input_dim())
    throw InvalidArgument("training data has " + std::to_string(train.dim) +
                          "-dimensional inputs, network expects " +
                          std::to_string(net.input_dim()));
  auto step = [&cfg](NetworkParams& params, const Batch& batch) {
    StepBreakdown info;
    params = datagrad_step(std::move(params), batch, cfg, &info);
    return std::pair{info.loss, info.correct};
  };
  return run_epochs<NetworkParams>(
      cfg, std::move(net), train, validation, on_epoch, step,
      [](const NetworkParams& p) { return p; },
      [](const NetworkParams&) { return std::optional<OutputHead>{}; });
}

TrainOutcome train_multitask(const TrainConfig& cfg, std::span<const std::size_t> layer_sizes,
                             const Dataset& train, const Dataset& validation,
                             const EpochCallback& on_epoch) {
  cfg.validate();
  if (!train.has_aux()) throw InvalidArgument("multi-task training needs rotation labels");
  MultiTaskParams mt = init_multitask(layer_sizes, kRotationClasses, cfg.seed);
  if (train.dim != mt.net.input_dim())
    throw InvalidArgument("training data has " + std::to_string(train.dim) +
                          "-dimensional inputs, network expects " +
                          std::to_string(mt.net.input_dim()));
  auto step = [&cfg](MultiTaskParams& params, const Batch& batch) {
    MultiTaskStepBreakdown info;
    params = multitask_datagrad_step(std::move(params), batch, cfg, &info);
    return std::pair{info.digit_loss, info.correct};
  };
  return run_epochs<MultiTaskParams>(
      cfg, std::move(mt), train, validation, on_epoch, step,
      [](const MultiTaskParams& p) { return p.net; },
      [](const MultiTaskParams& p) { return std::optional<OutputHead>(p.aux); });
}

}  // namespace datagrad
