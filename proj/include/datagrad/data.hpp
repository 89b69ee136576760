#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "datagrad/batch.hpp"
#include "datagrad/network.hpp"

namespace datagrad {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;     // u8, 3 dims
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;     // u8, 1 dim
inline constexpr std::uint32_t kIdxImagesF64Magic = 0x00000D03;  // f64, 3 dims
inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;

/// Images stored contiguously, one row of `dim` pixels per sample.
/// `aux_labels` is either empty or as long as `labels`.
struct Dataset {
  std::size_t dim = 0;
  std::vector<double> pixels;
  std::vector<Label> labels;
  std::vector<Label> aux_labels;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  bool has_aux() const noexcept { return !aux_labels.empty(); }

  std::span<const double> image(std::size_t i) const noexcept {
    return {pixels.data() + i * dim, dim};
  }
  std::span<double> image(std::size_t i) noexcept { return {pixels.data() + i * dim, dim}; }

  /// Checks the length invariants.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct IdxImages {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols bytes

  std::size_t count() const noexcept {
    return rows && cols ? pixels.size() / (std::size_t{rows} * cols) : 0;
  }
};

/// Big-endian IDX parsers. Throw FormatError naming the expected magic or the
/// byte offset at which the data ran out.
IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

/// Loads an image/label IDX pair. Pixels stay on the raw 0..255 scale.
/// Throws ConsistencyError when the two files disagree on the sample count.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

/// Divides every pixel by 255. Rejects a dataset whose maximum pixel is
/// already <= 1 (double normalisation).
Dataset normalize(Dataset raw);

/// f64 image variant (magic 0x00000D03): big-endian count/rows/cols followed by
/// big-endian IEEE-754 doubles. Used to store adversarial test sets, whose
/// pixels are off the 0..255 grid.
std::vector<std::uint8_t> encode_idx_f64_images(const Dataset& ds, std::uint32_t rows,
                                                std::uint32_t cols);
/// Loads an f64 image file plus its u8 label file; pixels are taken as is.
Dataset load_idx_f64(const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path);
/// Writes `ds` as an f64 image file and a u8 label file (28x28 layout).
void save_idx_f64(const Dataset& ds, const std::filesystem::path& images_path,
                  const std::filesystem::path& labels_path);

struct SplitSpec {
  std::size_t validation_count = 10000;
  std::uint64_t shuffle_seed = 0;
};

/// Deterministic shuffle, then the first `validation_count` shuffled indices
/// form the validation set. Both halves keep the original sample order.
std::pair<Dataset, Dataset> split(const Dataset& train, const SplitSpec& spec);

/// Subset of `ds` in the order given by `indices`.
Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);

/// Rotation angles (degrees, positive = counterclockwise) indexed by auxiliary
/// label: 0, 15 left, 30 left, 15 right, 30 right.
inline constexpr double kRotationAngles[5] = {0.0, 15.0, 30.0, -15.0, -30.0};

/// Rotates a square image about its centre by `degrees` counterclockwise using
/// inverse-mapped bilinear interpolation. Samples that fall outside the frame
/// read as 0; results are clamped to [0, 1].
std::vector<double> rotate_image(std::span<const double> image, std::size_t side,
                                 double degrees);

/// Emits five rotated copies of every 28x28 sample, consecutive per source
/// image, with the rotation index as auxiliary label.
Dataset rotation_augment(const Dataset& train);

/// Deterministic per-epoch shuffle of 0..n-1 cut into batches; the last batch
/// may be short.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t epoch_seed);

/// Stacks the selected samples into a Batch.
Batch gather(const Dataset& ds, std::span<const std::size_t> indices);

}  // namespace datagrad
