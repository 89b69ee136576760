#include "datagrad/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "datagrad/errors.hpp"
#include "datagrad/io.hpp"

namespace datagrad {

namespace {

std::string hex32(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

class BigEndianReader {
 public:
  BigEndianReader(std::span<const std::uint8_t> bytes, const char* what)
      : bytes_(bytes), what_(what) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  void expect_end() const {
    if (pos_ != bytes_.size())
      throw FormatError(std::string(what_) + ": " + std::to_string(bytes_.size() - pos_) +
                        " unexpected trailing bytes at byte offset " + std::to_string(pos_));
  }
  std::size_t offset() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw FormatError(std::string(what_) + ": truncated at byte offset " +
                        std::to_string(bytes_.size()) + " (needed " + std::to_string(n) +
                        " bytes from offset " + std::to_string(pos_) + ")");
  }
  std::span<const std::uint8_t> bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void expect_magic(BigEndianReader& r, std::uint32_t expected, const char* what) {
  const std::uint32_t magic = r.u32();
  if (magic != expected)
    throw FormatError(std::string(what) + ": bad magic " + hex32(magic) + ", expected " +
                      hex32(expected));
}

std::vector<std::uint8_t> read_labels(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_idx_labels(bytes);
}

Dataset assemble(std::size_t count, std::size_t dim, std::vector<double> pixels,
                 const std::vector<std::uint8_t>& labels) {
  if (labels.size() != count)
    throw ConsistencyError("image file holds " + std::to_string(count) +
                           " samples but label file holds " + std::to_string(labels.size()));
  Dataset ds;
  ds.dim = dim;
  ds.pixels = std::move(pixels);
  ds.labels.reserve(count);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 9)
      throw FormatError("label file: value " + std::to_string(labels[i]) +
                        " is not a digit (byte offset " + std::to_string(8 + i) + ")");
    ds.labels.push_back(labels[i]);
  }
  return ds;
}

}  // namespace

void Dataset::validate() const {
  if (pixels.size() != labels.size() * dim)
    throw ConsistencyError("dataset: pixel buffer does not match sample count");
  if (!aux_labels.empty() && aux_labels.size() != labels.size())
    throw ConsistencyError("dataset: auxiliary label count mismatch");
}

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  BigEndianReader r(bytes, "IDX image file");
  expect_magic(r, kIdxImagesMagic, "IDX image file");
  const std::uint32_t count = r.u32();
  IdxImages out;
  out.rows = r.u32();
  out.cols = r.u32();
  const auto payload = r.take(std::size_t{count} * out.rows * out.cols);
  r.expect_end();
  out.pixels.assign(payload.begin(), payload.end());
  if (count > 0 && (out.rows == 0 || out.cols == 0))
    throw FormatError("IDX image file: zero image dimension");
  return out;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  BigEndianReader r(bytes, "IDX label file");
  expect_magic(r, kIdxLabelsMagic, "IDX label file");
  const std::uint32_t count = r.u32();
  const auto payload = r.take(count);
  r.expect_end();
  return {payload.begin(), payload.end()};
}

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  put_u32(out, kIdxImagesMagic);
  put_u32(out, static_cast<std::uint32_t>(images.count()));
  put_u32(out, images.rows);
  put_u32(out, images.cols);
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  put_u32(out, kIdxLabelsMagic);
  put_u32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  const IdxImages images = parse_idx_images(read_file(images_path));
  const auto labels = read_labels(labels_path);
  std::vector<double> pixels(images.pixels.begin(), images.pixels.end());
  return assemble(images.count(), std::size_t{images.rows} * images.cols, std::move(pixels),
                  labels);
}

Dataset normalize(Dataset raw) {
  raw.validate();
  if (!raw.pixels.empty()) {
    const double peak = *std::max_element(raw.pixels.begin(), raw.pixels.end());
    if (peak <= 1.0)
      throw InvalidArgument("normalize: pixels already lie in [0,1]; refusing to divide by 255 again");
  }
  for (double& p : raw.pixels) p /= 255.0;
  return raw;
}

std::vector<std::uint8_t> encode_idx_f64_images(const Dataset& ds, std::uint32_t rows,
                                                std::uint32_t cols) {
  ds.validate();
  if (std::size_t{rows} * cols != ds.dim)
    throw InvalidArgument("encode_idx_f64_images: dimensions do not match the dataset");
  std::vector<std::uint8_t> out;
  out.reserve(16 + ds.pixels.size() * 8);
  put_u32(out, kIdxImagesF64Magic);
  put_u32(out, static_cast<std::uint32_t>(ds.size()));
  put_u32(out, rows);
  put_u32(out, cols);
  for (double p : ds.pixels) {
    const auto bits = std::bit_cast<std::uint64_t>(p);
    for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(bits >> s));
  }
  return out;
}

Dataset load_idx_f64(const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path) {
  const auto bytes = read_file(images_path);
  BigEndianReader r(bytes, "IDX f64 image file");
  expect_magic(r, kIdxImagesF64Magic, "IDX f64 image file");
  const std::uint32_t count = r.u32();
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  const std::size_t n = std::size_t{count} * rows * cols;
  const auto payload = r.take(n * 8);
  r.expect_end();
  std::vector<double> pixels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits = (bits << 8) | payload[i * 8 + b];
    pixels[i] = std::bit_cast<double>(bits);
  }
  return assemble(count, std::size_t{rows} * cols, std::move(pixels), read_labels(labels_path));
}

void save_idx_f64(const Dataset& ds, const std::filesystem::path& images_path,
                  const std::filesystem::path& labels_path) {
  if (ds.dim != kImagePixels)
    throw InvalidArgument("save_idx_f64: expected 28x28 images");
  std::vector<std::uint8_t> labels;
  labels.reserve(ds.size());
  for (Label l : ds.labels) {
    if (l > 255) throw InvalidArgument("save_idx_f64: label does not fit in a byte");
    labels.push_back(static_cast<std::uint8_t>(l));
  }
  write_file_atomic(images_path,
                    encode_idx_f64_images(ds, kImageSide, kImageSide));
  write_file_atomic(labels_path, encode_idx_labels(labels));
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.dim = ds.dim;
  out.pixels.reserve(indices.size() * ds.dim);
  out.labels.reserve(indices.size());
  if (ds.has_aux()) out.aux_labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= ds.size()) throw InvalidArgument("subset: index out of range");
    const auto img = ds.image(i);
    out.pixels.insert(out.pixels.end(), img.begin(), img.end());
    out.labels.push_back(ds.labels[i]);
    if (ds.has_aux()) out.aux_labels.push_back(ds.aux_labels[i]);
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& train, const SplitSpec& spec) {
  train.validate();
  if (spec.validation_count > train.size())
    throw InvalidArgument("split: validation_count " + std::to_string(spec.validation_count) +
                          " exceeds the " + std::to_string(train.size()) + " available samples");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(spec.shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> val(order.begin(), order.begin() + spec.validation_count);
  std::vector<std::size_t> rest(order.begin() + spec.validation_count, order.end());
  std::sort(val.begin(), val.end());
  std::sort(rest.begin(), rest.end());
  return {subset(train, rest), subset(train, val)};
}

std::vector<double> rotate_image(std::span<const double> image, std::size_t side,
                                 double degrees) {
  if (image.size() != side * side) throw InvalidArgument("rotate_image: image is not side x side");
  const double theta = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double centre = (static_cast<double>(side) - 1.0) / 2.0;
  const auto n = static_cast<std::ptrdiff_t>(side);

  auto at = [&](std::ptrdiff_t x, std::ptrdiff_t y) -> double {
    if (x < 0 || y < 0 || x >= n || y >= n) return 0.0;
    return image[static_cast<std::size_t>(y * n + x)];
  };

  std::vector<double> out(image.size());
  for (std::ptrdiff_t y = 0; y < n; ++y) {
    for (std::ptrdiff_t x = 0; x < n; ++x) {
      // Image rows grow downwards, so a counterclockwise turn on screen reads
      // its source through the inverse rotation below.
      const double dx = static_cast<double>(x) - centre;
      const double dy = static_cast<double>(y) - centre;
      const double sx = c * dx - s * dy + centre;
      const double sy = s * dx + c * dy + centre;
      const double fx0 = std::floor(sx);
      const double fy0 = std::floor(sy);
      const double fx = sx - fx0;
      const double fy = sy - fy0;
      const auto x0 = static_cast<std::ptrdiff_t>(fx0);
      const auto y0 = static_cast<std::ptrdiff_t>(fy0);
      const double v = (1.0 - fx) * (1.0 - fy) * at(x0, y0) + fx * (1.0 - fy) * at(x0 + 1, y0) +
                       (1.0 - fx) * fy * at(x0, y0 + 1) + fx * fy * at(x0 + 1, y0 + 1);
      out[static_cast<std::size_t>(y * n + x)] = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

Dataset rotation_augment(const Dataset& train) {
  train.validate();
  if (train.dim != kImagePixels)
    throw InvalidArgument("rotation_augment: expected 784-pixel (28x28) images, got " +
                          std::to_string(train.dim));
  Dataset out;
  out.dim = train.dim;
  out.pixels.reserve(train.pixels.size() * 5);
  out.labels.reserve(train.size() * 5);
  out.aux_labels.reserve(train.size() * 5);
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (std::size_t r = 0; r < std::size(kRotationAngles); ++r) {
      const auto rotated = rotate_image(train.image(i), kImageSide, kRotationAngles[r]);
      out.pixels.insert(out.pixels.end(), rotated.begin(), rotated.end());
      out.labels.push_back(train.labels[i]);
      out.aux_labels.push_back(r);
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t epoch_seed) {
  if (batch_size == 0) throw InvalidArgument("batches: batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<std::size_t>> out;
  out.reserve((n + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Batch gather(const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InvalidArgument("gather: no indices");
  Batch b{Matrix(indices.size(), ds.dim), {}, {}};
  b.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    if (i >= ds.size()) throw InvalidArgument("gather: index out of range");
    const auto img = ds.image(i);
    std::copy(img.begin(), img.end(), b.inputs.row(r).begin());
    b.labels.push_back(ds.labels[i]);
    if (ds.has_aux()) b.aux_labels.push_back(ds.aux_labels[i]);
  }
  return b;
}

}  // namespace datagrad
