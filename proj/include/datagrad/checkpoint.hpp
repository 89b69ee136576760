#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "datagrad/network.hpp"

namespace datagrad {

// Checkpoint layout, all integers little-endian:
//
//   "DGRD"                      4 bytes
//   version                     u32   1 = single network, 2 = network + auxiliary head
//   layer count                 u32   number of entries in layer_sizes (input included)
//   layer sizes                 u32 each
//   aux class count             u32   version 2 only
//   weights                     f64 each, layer order, row-major
//   biases                      f64 each, layer order
//   aux weights, aux bias       f64 each, version 2 only

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kCheckpointVersionWithHead = 2;

struct Checkpoint {
  NetworkParams net;
  std::optional<OutputHead> aux_head;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> encode_checkpoint(const NetworkParams& net,
                                            const OutputHead* aux_head = nullptr);

/// Throws FormatError on a bad magic, unknown version, or truncated payload.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const NetworkParams& net,
                     const OutputHead* aux_head = nullptr);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace datagrad
