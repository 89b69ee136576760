#pragma once

#include <span>
#include <vector>

#include "datagrad/network.hpp"

namespace datagrad {

/// A mini-batch laid out one sample per row. `aux_labels` is empty unless the
/// batch feeds a multi-task model.
struct Batch {
  Matrix inputs;
  std::vector<Label> labels;
  std::vector<Label> aux_labels;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Stacks single samples into a batch.
Batch make_batch(std::span<const Vector> inputs, std::span<const Label> labels,
                 std::span<const Label> aux_labels = {});

}  // namespace datagrad
