#include "doctest.h"

#include <cmath>
#include <random>

#include "datagrad/batch.hpp"
#include "datagrad/datagrad.hpp"
#include "support.hpp"

using namespace datagrad;

namespace {

struct Sample {
  NetworkParams net;
  Vector d;
  Label label;
};

// Random net and input whose hidden units all sit at least `margin` away
// from the ReLU kink.
Sample smooth_sample(const std::vector<std::size_t>& sizes, std::mt19937_64& rng,
                     double margin = 1e-2) {
  for (;;) {
    Sample s{testsupport::random_net(sizes, rng), testsupport::random_vector(sizes[0], rng),
             static_cast<Label>(rng() % sizes.back())};
    testsupport::LdNet ref(s.net);
    if (testsupport::min_hidden_abs(ref, testsupport::widen(s.d.span())) >= margin) return s;
  }
}

Batch random_batch(std::size_t n, std::size_t dim, std::size_t classes, std::mt19937_64& rng) {
  std::vector<Vector> inputs;
  std::vector<Label> labels;
  for (std::size_t i = 0; i < n; ++i) {
    inputs.push_back(testsupport::random_vector(dim, rng, 0.0, 1.0));
    labels.push_back(rng() % classes);
  }
  return make_batch(inputs, labels);
}

double dot(const ParamGradients& g, const ParamGradients& v) {
  double s = 0.0;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    for (std::size_t i = 0; i < g.weights[l].size(); ++i)
      s += g.weights[l].span()[i] * v.weights[l].span()[i];
    for (std::size_t i = 0; i < g.biases[l].size(); ++i) s += g.biases[l][i] * v.biases[l][i];
  }
  return s;
}

}  // namespace

TEST_CASE("reg_value") {
  CHECK(reg_value(RegularizerKind::L2, Vector{1, 2}) == 5.0);
  CHECK(reg_value(RegularizerKind::L1, Vector{-1, 2, 0}) == 3.0);
  CHECK(reg_value(RegularizerKind::L1, Vector(4)) == 0.0);
  CHECK(reg_value(RegularizerKind::L2, Vector(4)) == 0.0);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const Vector x = testsupport::random_vector(5, rng);
    CHECK(reg_value(RegularizerKind::L1, x) > 0.0);
    CHECK(reg_value(RegularizerKind::L2, x) > 0.0);
  }
}

TEST_CASE("immediate gradient and adversarial direction") {
  CHECK(immediate_gradient(RegularizerKind::L2, Vector{1, -3}) == Vector{2, -6});
  CHECK(immediate_gradient(RegularizerKind::L1, Vector{0.5, -2, 0}) == Vector{1, -1, 0});
  CHECK(immediate_gradient(RegularizerKind::L1, Vector(3)) == Vector(3));
  CHECK(immediate_gradient(RegularizerKind::L2, Vector(3)) == Vector(3));

  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    Vector g = testsupport::random_vector(9, rng);
    g[0] = 0.0;
    const Vector y1 = adversarial_direction(RegularizerKind::L1, g);
    const Vector y2 = adversarial_direction(RegularizerKind::L2, g);
    for (std::size_t s = 0; s < g.size(); ++s) {
      CHECK(y1[s] == (g[s] > 0 ? 1.0 : g[s] < 0 ? -1.0 : 0.0));
      CHECK(y2[s] == 2.0 * g[s]);
    }
  }
}

TEST_CASE("make_adversarial") {
  CHECK(make_adversarial(Vector{0.5, 0.5}, Vector{1, -1}, 0.0) == Vector{0.5, 0.5});
  const Vector a = make_adversarial(Vector{0.5, 0.5}, Vector{1, -1}, 0.1);
  CHECK(a[0] == doctest::Approx(0.6));
  CHECK(a[1] == doctest::Approx(0.4));
  // No clipping.
  CHECK(make_adversarial(Vector{1.0}, Vector{1}, 0.05)[0] == 1.05);
  // Sign noise at 0.05 moves each pixel by about 12 grey levels.
  const Vector d(784, 0.5);
  const Vector y = adversarial_direction(RegularizerKind::L1, Vector(784, -0.3));
  const Vector moved = make_adversarial(d, y, 0.05);
  double max_change = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) max_change = std::max(max_change, std::fabs(moved[i] - d[i]));
  CHECK(max_change == doctest::Approx(0.05));
  CHECK(max_change * 255.0 == doctest::Approx(12.75));
  CHECK_THROWS_AS(make_adversarial(Vector{1, 2}, Vector{1}, 0.1), InvalidArgument);
}

TEST_CASE("fd_regularizer_grad is zero when the data gradient vanishes") {
  NetworkParams p;
  p.layer_sizes = {2, 2, 3};
  p.weights = {Matrix{{1, 0}, {0, 1}}, Matrix(3, 2)};
  p.biases = {Vector{1, 1}, Vector{0, 2000, 0}};
  TrainConfig cfg;
  cfg.fd_step = 0.1;
  for (auto kind : {RegularizerKind::L1, RegularizerKind::L2}) {
    cfg.reg_kind = kind;
    const ParamGradients g = fd_regularizer_grad(p, Vector{0.3, 0.7}, 1, cfg);
    for (const auto& w : g.weights)
      for (double v : w.span()) CHECK(v == 0.0);
    for (const auto& b : g.biases)
      for (double v : b.span()) CHECK(v == 0.0);
  }
}

TEST_CASE("fd_regularizer_grad matches the mixed-partial oracle on 2-2-2 nets") {
  std::mt19937_64 rng(222);
  for (auto kind : {RegularizerKind::L1, RegularizerKind::L2}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Sample s = smooth_sample({2, 2, 2}, rng);
      TrainConfig cfg;
      cfg.reg_kind = kind;
      cfg.fd_step = 1e-4;
      const BackpropResult base = backward(s.net, forward(s.net, s.d), s.label);
      const Vector y = adversarial_direction(kind, base.data_gradient);
      const auto oracle = testsupport::mixed_partial_oracle(s.net, s.d.span(), s.label, y.span());
      const ParamGradients g = fd_regularizer_grad(s.net, s.d, s.label, cfg);
      for (std::size_t l = 0; l < 2; ++l) {
        const auto ow = testsupport::narrow(oracle.w[l]);
        CHECK(testsupport::norm_rel_err(g.weights[l].span(), ow) < 1e-3);
      }
    }
  }
}

TEST_CASE("fd_regularizer_grad converges at first order (Richardson check on 3-4-2)") {
  std::mt19937_64 rng(342);
  const Sample s = smooth_sample({3, 4, 2}, rng, 0.05);
  TrainConfig cfg;
  cfg.reg_kind = RegularizerKind::L2;
  const ParamGradients v = [&] {
    ParamGradients dir = ParamGradients::zeros_like(s.net);
    for (auto& w : dir.weights)
      for (double& x : w.span()) x = std::uniform_real_distribution<double>(-1, 1)(rng);
    for (auto& b : dir.biases)
      for (double& x : b.span()) x = std::uniform_real_distribution<double>(-1, 1)(rng);
    return dir;
  }();
  auto f = [&](double t) {
    cfg.fd_step = t;
    return dot(fd_regularizer_grad(s.net, s.d, s.label, cfg), v);
  };
  const double f1 = f(1e-3), f2 = f(5e-4), f3 = f(2.5e-4);
  const double limit = 2 * f3 - f2;  // first-order Richardson extrapolation
  const double e1 = std::fabs(f1 - limit), e2 = std::fabs(f2 - limit);
  CHECK(e2 < e1);
  CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.15));

  const BackpropResult base = backward(s.net, forward(s.net, s.d), s.label);
  const Vector y = adversarial_direction(cfg.reg_kind, base.data_gradient);
  const auto oracle = testsupport::mixed_partial_oracle(s.net, s.d.span(), s.label, y.span());
  double exact = 0.0;
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t i = 0; i < oracle.w[l].size(); ++i)
      exact += static_cast<double>(oracle.w[l][i]) * v.weights[l].span()[i];
    for (std::size_t i = 0; i < oracle.b[l].size(); ++i)
      exact += static_cast<double>(oracle.b[l][i]) * v.biases[l][i];
  }
  CHECK(std::fabs(limit - exact) < 0.1 * std::fabs(f3 - exact) + 1e-9);
}

TEST_CASE("batched DataGrad gradients average the per-sample recipe") {
  std::mt19937_64 rng(10);
  const NetworkParams p = testsupport::random_net({6, 5, 4}, rng);
  const Batch batch = random_batch(8, 6, 4, rng);
  TrainConfig cfg;
  cfg.lambda1 = 0.3;
  cfg.fd_step = 0.05;
  cfg.reg_kind = RegularizerKind::L1;
  const StepBreakdown step = datagrad_gradients(p, batch, cfg);
  REQUIRE(step.omega.has_value());

  ParamGradients mean = ParamGradients::zeros_like(p);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ParamGradients r = fd_regularizer_grad(p, Vector(batch.inputs.row(i)), batch.labels[i], cfg);
    for (std::size_t l = 0; l < 2; ++l) {
      axpy(1.0 / 8.0, r.weights[l], mean.weights[l]);
      axpy(1.0 / 8.0, r.biases[l], mean.biases[l]);
    }
  }
  for (std::size_t l = 0; l < 2; ++l) {
    Matrix regrad = step.omega->weights[l];
    axpy(-1.0, step.xi.weights[l], regrad);
    scale(1.0 / cfg.fd_step, regrad);
    for (std::size_t i = 0; i < regrad.size(); ++i)
      CHECK(std::fabs(regrad.span()[i] - mean.weights[l].span()[i]) < 1e-9);
  }
}

TEST_CASE("update identity: lambda0 xi + lambda1 (omega - xi)/t") {
  std::mt19937_64 rng(44);
  NetworkParams p = testsupport::random_net({6, 5, 3}, rng);
  TrainConfig cfg;
  cfg.eta = 0.05;
  cfg.lambda1 = 0.2;
  cfg.fd_step = 0.02;
  for (int step = 0; step < 10; ++step) {
    const Batch batch = random_batch(5, 6, 3, rng);
    StepBreakdown info;
    const NetworkParams before = p;
    p = datagrad_step(std::move(p), batch, cfg, &info);
    const double a = cfg.lambda0 - cfg.lambda1 / cfg.fd_step, b = cfg.lambda1 / cfg.fd_step;
    for (std::size_t l = 0; l < 2; ++l) {
      Matrix expected = info.xi.weights[l];
      scale(a, expected);
      axpy(b, info.omega->weights[l], expected);
      CHECK(testsupport::norm_rel_err(info.direction.weights[l].span(), expected.span()) < 1e-12);
      Matrix applied = before.weights[l];
      axpy(-1.0, p.weights[l], applied);
      scale(1.0 / cfg.eta, applied);
      CHECK(testsupport::norm_rel_err(applied.span(), expected.span()) < 1e-9);
    }
  }
}

TEST_CASE("lambda1 = 0 is plain SGD, bit for bit") {
  std::mt19937_64 rng(5);
  NetworkParams dg = testsupport::random_net({6, 5, 3}, rng);
  NetworkParams sgd = dg;
  TrainConfig cfg;
  cfg.eta = 0.1;
  cfg.lambda1 = 0.0;
  for (int step = 0; step < 20; ++step) {
    const Batch batch = random_batch(4, 6, 3, rng);
    StepBreakdown info;
    dg = datagrad_step(std::move(dg), batch, cfg, &info);
    CHECK_FALSE(info.omega.has_value());
    const BatchTrace t = forward_batch(sgd, batch.inputs);
    const BatchGradients g = backward_batch(sgd, t, softmax_residual(t.activations.back(), batch.labels));
    for (std::size_t l = 0; l < 2; ++l) {
      axpy(-cfg.eta, g.weight_grads[l], sgd.weights[l]);
      axpy(-cfg.eta, g.bias_grads[l], sgd.biases[l]);
    }
    CHECK(dg.weights == sgd.weights);
    CHECK(dg.biases == sgd.biases);
  }
}

TEST_CASE("eta = 0 leaves parameters unchanged") {
  std::mt19937_64 rng(6);
  const NetworkParams p = testsupport::random_net({6, 5, 3}, rng);
  TrainConfig cfg;
  cfg.eta = 0.0;
  cfg.lambda1 = 0.5;
  const NetworkParams q = datagrad_step(p, random_batch(4, 6, 3, rng), cfg);
  CHECK(q.weights == p.weights);
  CHECK(q.biases == p.biases);
}

TEST_CASE("weight penalties") {
  NetworkParams p;
  p.layer_sizes = {2, 2};
  p.weights = {Matrix{{1, -2}, {0, 3}}};
  p.biases = {Vector{0, 0}};
  Batch batch = make_batch(std::vector<Vector>{Vector{0, 0}}, std::vector<Label>{0});
  TrainConfig cfg;
  cfg.weight_penalty = WeightPenalty{RegularizerKind::L2, 0.1};
  const StepBreakdown l2 = datagrad_gradients(p, batch, cfg);
  // Zero input: the loss gradient on W vanishes, leaving the penalty alone.
  CHECK(l2.direction.weights[0] == Matrix{{0.2, -0.4}, {0, 0.6000000000000001}});
  cfg.weight_penalty = WeightPenalty{RegularizerKind::L1, 0.1};
  const StepBreakdown l1 = datagrad_gradients(p, batch, cfg);
  CHECK(l1.direction.weights[0] == Matrix{{0.1, -0.1}, {0, 0.1}});
  // Biases are not penalised.
  CHECK(l1.direction.biases[0] == l1.xi.biases[0]);
}

TEST_CASE("DataGrad step errors") {
  std::mt19937_64 rng(7);
  NetworkParams p = testsupport::random_net({3, 3, 2}, rng);
  TrainConfig cfg;
  Batch empty{Matrix(1, 3), {}, {}};
  CHECK_THROWS_AS(datagrad_step(p, empty, cfg), InvalidArgument);

  cfg.eta = 1e308;
  const Vector big{1e10, 2e10, 3e10};
  const Label wrong = 1 - argmax(forward(p, big).prediction.span());
  Batch batch = make_batch(std::vector<Vector>{big}, std::vector<Label>{wrong});
  const NetworkParams before = p;
  NetworkParams target = p;
  try {
    target = datagrad_step(p, batch, cfg);
    FAIL("expected a numerical failure");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("layer") != std::string::npos);
  }
  CHECK(target.weights == before.weights);

  ParamGradients nan_dir = ParamGradients::zeros_like(p);
  nan_dir.weights[1](0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(apply_update(p, nan_dir, 0.1), doctest::Contains("layer 2"), NumericalError);
  CHECK(p.weights == before.weights);
}

TEST_CASE("TrainConfig validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.fd_step = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = TrainConfig{};
  cfg.lambda1 = -1;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  CHECK(parse_regularizer("L2") == RegularizerKind::L2);
  CHECK(parse_regularizer("l1") == RegularizerKind::L1);
  CHECK_THROWS(parse_regularizer("l3"));
}
