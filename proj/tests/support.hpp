#pragma once

// Test-side helpers: long-double reference network, finite-difference
// oracles, temporary directories and synthetic IDX fixtures.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "datagrad/data.hpp"
#include "datagrad/io.hpp"
#include "datagrad/network.hpp"

namespace testsupport {

using datagrad::Label;
using datagrad::Matrix;
using datagrad::NetworkParams;
using datagrad::Vector;

using LVec = std::vector<long double>;

/// Parameters widened to long double, row-major like the real ones.
struct LdNet {
  std::vector<std::size_t> sizes;
  std::vector<LVec> w;
  std::vector<LVec> b;

  explicit LdNet(const NetworkParams& p) : sizes(p.layer_sizes) {
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      w.emplace_back(p.weights[l].span().begin(), p.weights[l].span().end());
      b.emplace_back(p.biases[l].span().begin(), p.biases[l].span().end());
    }
  }
};

inline LVec widen(std::span<const double> v) { return LVec(v.begin(), v.end()); }

/// Preactivations of every layer, computed independently of the library.
inline std::vector<LVec> ld_preactivations(const LdNet& net, const LVec& d) {
  std::vector<LVec> hs;
  LVec a = d;
  const std::size_t k = net.w.size();
  for (std::size_t l = 0; l < k; ++l) {
    const std::size_t rows = net.sizes[l + 1], cols = net.sizes[l];
    LVec h(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      long double s = net.b[l][i];
      for (std::size_t j = 0; j < cols; ++j) s += net.w[l][i * cols + j] * a[j];
      h[i] = s;
    }
    hs.push_back(h);
    if (l + 1 < k)
      for (auto& v : h) v = v > 0 ? v : 0;
    a = h;
  }
  return hs;
}

/// Softmax cross-entropy loss of the reference network.
inline long double ld_loss(const LdNet& net, const LVec& d, Label label) {
  const LVec logits = ld_preactivations(net, d).back();
  const long double m = *std::max_element(logits.begin(), logits.end());
  long double z = 0;
  for (long double v : logits) z += std::exp(v - m);
  return -(logits[label] - m - std::log(z));
}

/// Smallest |h| over all hidden units; used to stay clear of ReLU kinks.
inline long double min_hidden_abs(const LdNet& net, const LVec& d) {
  const auto hs = ld_preactivations(net, d);
  long double m = INFINITY;
  for (std::size_t l = 0; l + 1 < hs.size(); ++l)
    for (long double v : hs[l]) m = std::min(m, std::fabs(v));
  return m;
}

/// Sum_s y_s d^2 L / (d theta d d_s) for every weight and bias, by nested
/// central differences in long double: the inner difference moves d along y,
/// the outer one moves a single parameter.
struct MixedPartials {
  std::vector<LVec> w;
  std::vector<LVec> b;
};

inline MixedPartials mixed_partial_oracle(const NetworkParams& p, std::span<const double> d,
                                          Label label, std::span<const double> y,
                                          long double eps = 1e-4L, long double delta = 1e-4L) {
  LdNet net(p);
  LVec plus(d.size()), minus(d.size());
  for (std::size_t s = 0; s < d.size(); ++s) {
    plus[s] = (long double)d[s] + eps * y[s];
    minus[s] = (long double)d[s] - eps * y[s];
  }
  auto directional = [&] {
    return (ld_loss(net, plus, label) - ld_loss(net, minus, label)) / (2 * eps);
  };
  auto outer = [&](long double& theta) {
    const long double keep = theta;
    theta = keep + delta;
    const long double up = directional();
    theta = keep - delta;
    const long double down = directional();
    theta = keep;
    return (up - down) / (2 * delta);
  };
  MixedPartials out;
  for (std::size_t l = 0; l < net.w.size(); ++l) {
    LVec gw(net.w[l].size()), gb(net.b[l].size());
    for (std::size_t i = 0; i < gw.size(); ++i) gw[i] = outer(net.w[l][i]);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] = outer(net.b[l][i]);
    out.w.push_back(std::move(gw));
    out.b.push_back(std::move(gb));
  }
  return out;
}

inline std::vector<double> narrow(const LVec& v) { return std::vector<double>(v.begin(), v.end()); }

/// Random network with entries uniform in [-1, 1].
inline NetworkParams random_net(const std::vector<std::size_t>& sizes, std::mt19937_64& rng,
                                double bias_scale = 0.5) {
  NetworkParams p = datagrad::init_he(sizes, rng());
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& w : p.weights)
    for (double& v : w.span()) v = u(rng);
  for (auto& b : p.biases)
    for (double& v : b.span()) v = bias_scale * u(rng);
  return p;
}

inline Vector random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (double& x : v.span()) x = u(rng);
  return v;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

/// ||a - b|| / ||b|| in the Frobenius norm.
inline double norm_rel_err(std::span<const double> a, std::span<const double> b) {
  long double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (long double)(a[i] - b[i]) * (a[i] - b[i]);
    den += (long double)b[i] * b[i];
  }
  if (den == 0) return num == 0 ? 0.0 : INFINITY;
  return static_cast<double>(std::sqrt(num / den));
}

/// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("datagrad-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Learnable 28x28 toy digits: class c lights a 4x4 block whose position
/// depends on c, plus low-level noise.
inline datagrad::IdxImages toy_images(std::size_t n, std::uint64_t seed,
                                      std::vector<std::uint8_t>& labels) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> noise(0, 40);
  datagrad::IdxImages img{28, 28, std::vector<std::uint8_t>(n * 784)};
  labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::uint8_t>(i % 10);
    labels[i] = c;
    std::uint8_t* px = img.pixels.data() + i * 784;
    for (std::size_t p = 0; p < 784; ++p) px[p] = static_cast<std::uint8_t>(noise(rng));
    const std::size_t r0 = 2 + 5 * (c / 5) * 2, c0 = 2 + 5 * (c % 5);
    for (std::size_t r = r0; r < r0 + 4; ++r)
      for (std::size_t q = c0; q < c0 + 4; ++q) px[r * 28 + q] = 255;
  }
  return img;
}

/// Writes toy train/test IDX files (MNIST file names) into `dir`.
inline void write_toy_mnist(const std::filesystem::path& dir, std::size_t train_n,
                            std::size_t test_n) {
  std::vector<std::uint8_t> labels;
  auto images = toy_images(train_n, 11, labels);
  datagrad::write_file_atomic(dir / "train-images-idx3-ubyte", datagrad::encode_idx_images(images));
  datagrad::write_file_atomic(dir / "train-labels-idx1-ubyte", datagrad::encode_idx_labels(labels));
  images = toy_images(test_n, 12, labels);
  datagrad::write_file_atomic(dir / "t10k-images-idx3-ubyte", datagrad::encode_idx_images(images));
  datagrad::write_file_atomic(dir / "t10k-labels-idx1-ubyte", datagrad::encode_idx_labels(labels));
}

}  // namespace testsupport
