#include "datagrad/batch.hpp"

#include <algorithm>
#include <string>

namespace datagrad {

Batch make_batch(std::span<const Vector> inputs, std::span<const Label> labels,
                 std::span<const Label> aux_labels) {
  if (inputs.empty()) throw InvalidArgument("make_batch: no samples");
  if (labels.size() != inputs.size())
    throw InvalidArgument("make_batch: " + std::to_string(inputs.size()) + " inputs but " +
                          std::to_string(labels.size()) + " labels");
  if (!aux_labels.empty() && aux_labels.size() != inputs.size())
    throw InvalidArgument("make_batch: auxiliary label count mismatch");

  const std::size_t dim = inputs.front().size();
  Matrix m(inputs.size(), dim);
  for (std::size_t r = 0; r < inputs.size(); ++r) {
    if (inputs[r].size() != dim) throw InvalidArgument("make_batch: ragged inputs");
    std::copy(inputs[r].begin(), inputs[r].end(), m.row(r).begin());
  }
  return Batch{std::move(m), std::vector<Label>(labels.begin(), labels.end()),
               std::vector<Label>(aux_labels.begin(), aux_labels.end())};
}

}  // namespace datagrad
