#include "datagrad/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <iterator>
#include <string>

#include "datagrad/errors.hpp"
#include "datagrad/io.hpp"

namespace datagrad {

namespace {

constexpr std::uint8_t kMagic[4] = {'D', 'G', 'R', 'D'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void f64s(std::span<const double> values) {
    for (double v : values) f64(v);
  }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }
  void f64s(std::span<double> out) {
    for (double& v : out) v = f64();
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw FormatError("checkpoint truncated at byte offset " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const NetworkParams& net, const OutputHead* aux_head) {
  net.validate();
  Writer w;
  w.bytes().insert(w.bytes().end(), std::begin(kMagic), std::end(kMagic));
  w.u32(aux_head ? kCheckpointVersionWithHead : kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(net.layer_sizes.size()));
  for (std::size_t s : net.layer_sizes) w.u32(static_cast<std::uint32_t>(s));
  if (aux_head) {
    if (net.num_layers() < 2 || aux_head->weights.cols() != net.layer_sizes[net.num_layers() - 1] ||
        aux_head->bias.size() != aux_head->weights.rows())
      throw InvalidArgument("encode_checkpoint: auxiliary head does not fit the network");
    w.u32(static_cast<std::uint32_t>(aux_head->weights.rows()));
  }
  for (const auto& m : net.weights) w.f64s(m.span());
  for (const auto& b : net.biases) w.f64s(b.span());
  if (aux_head) {
    w.f64s(aux_head->weights.span());
    w.f64s(aux_head->bias.span());
  }
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw FormatError("checkpoint: bad magic, expected \"DGRD\"");
  Reader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion && version != kCheckpointVersionWithHead)
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version));

  const std::uint32_t count = r.u32();
  if (count < 2) throw FormatError("checkpoint: layer count " + std::to_string(count) + " < 2");
  Checkpoint ckpt;
  NetworkParams& net = ckpt.net;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t s = r.u32();
    if (s == 0) throw FormatError("checkpoint: zero layer size");
    net.layer_sizes.push_back(s);
  }
  std::uint32_t aux_classes = 0;
  if (version == kCheckpointVersionWithHead) {
    aux_classes = r.u32();
    if (aux_classes == 0 || count < 3)
      throw FormatError("checkpoint: invalid auxiliary head description");
  }

  // Check the payload length before allocating anything proportional to it.
  std::size_t doubles = 0;
  for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l)
    doubles += net.layer_sizes[l + 1] * (net.layer_sizes[l] + 1);
  if (aux_classes) doubles += aux_classes * (net.layer_sizes[count - 2] + 1);
  if (r.remaining() != doubles * 8)
    throw FormatError("checkpoint: payload is " + std::to_string(r.remaining()) +
                      " bytes, expected " + std::to_string(doubles * 8));

  for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
    Matrix m(net.layer_sizes[l + 1], net.layer_sizes[l]);
    r.f64s(m.span());
    net.weights.push_back(std::move(m));
  }
  for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
    Vector b(net.layer_sizes[l + 1]);
    r.f64s(b.span());
    net.biases.push_back(std::move(b));
  }
  if (aux_classes) {
    OutputHead head{Matrix(aux_classes, net.layer_sizes[count - 2]), Vector(aux_classes)};
    r.f64s(head.weights.span());
    r.f64s(head.bias.span());
    ckpt.aux_head = std::move(head);
  }
  try {
    net.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  if (ckpt.aux_head && !(all_finite(ckpt.aux_head->weights.span()) &&
                         all_finite(ckpt.aux_head->bias.span())))
    throw FormatError("checkpoint: auxiliary head has non-finite parameters");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const NetworkParams& net,
                     const OutputHead* aux_head) {
  write_file_atomic(path, encode_checkpoint(net, aux_head));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace datagrad
