#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "nullscan/adamw.hpp"
#include "nullscan/grad_check.hpp"
#include "nullscan/nn.hpp"

using namespace nullscan;
using doctest::Approx;

namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64 &rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  Tensor<double> t(std::move(shape));
  for (auto &v : t.values()) v = d(rng);
  return t;
}

Parameter<double> random_param(const std::string &name, Shape shape, std::mt19937_64 &rng) {
  return Parameter<double>(name, random_tensor(std::move(shape), rng));
}

double dot(const Tensor<double> &a, const Tensor<double> &b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_SUITE("nn_core") {

TEST_CASE("relu and its kink") {
  const Tensor<double> x({3}, std::vector<double>{-3, 0, 5});
  CHECK(relu(x).values() == std::vector<double>{0, 0, 5});
  const Tensor<double> g({3}, std::vector<double>{1, 1, 1});
  CHECK(relu_backward(x, g).values() == std::vector<double>{0, 0, 1});
}

TEST_CASE("sigmoid: midpoint, symmetry, saturation") {
  CHECK(sigmoid(0.0) == 0.5);
  for (double x : {0.1, 1.0, 3.7, 25.0, 700.0})
    CHECK(sigmoid(x) + sigmoid(-x) == Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(sigmoid(100.0) - 1.0) < 1e-12);
  CHECK(sigmoid(-1000.0) >= 0.0);
  CHECK(std::isfinite(sigmoid(-1000.0)));
  CHECK(std::isfinite(sigmoid(1000.0f)));
}

TEST_CASE("softmax: uniform, analytic, shift invariance, rows sum to one") {
  const auto u = softmax(Tensor<double>({3}, std::vector<double>{0, 0, 0}), 0);
  for (double v : u.values()) CHECK(v == Approx(1.0 / 3).epsilon(1e-15));
  const auto a = softmax(Tensor<double>({2}, std::vector<double>{0, std::log(3.0)}), 0);
  CHECK(a[0] == Approx(0.25).epsilon(1e-14));
  CHECK(a[1] == Approx(0.75).epsilon(1e-14));

  std::mt19937_64 rng(5);
  const auto x = random_tensor({4, 6}, rng, 10.0);
  Tensor<double> shifted = x;
  for (auto &v : shifted.values()) v += 123.0;
  const auto s = softmax(x, 1);
  const auto t = softmax(shifted, 1);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == Approx(t[i]).epsilon(1e-12));
  for (std::size_t r = 0; r < 4; ++r) {
    double sum = 0;
    for (double v : s.row(r)) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
  const auto cols = softmax(x, 0);
  for (std::size_t c = 0; c < 6; ++c) {
    double sum = 0;
    for (std::size_t r = 0; r < 4; ++r) sum += cols(r, c);
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
  const auto big = softmax(Tensor<double>({2}, std::vector<double>{1000, 0}), 0);
  CHECK(big[0] == 1.0);
}

TEST_CASE("dense forward: identity and hand case") {
  const Tensor<double> x({1, 2}, std::vector<double>{1, 2});
  const Tensor<double> eye({2, 2}, std::vector<double>{1, 0, 0, 1});
  CHECK(dense_forward(x, eye, Tensor<double>::vector(2)).values() ==
        std::vector<double>{1, 2});
  CHECK(dense_forward(x, eye, Tensor<double>({2}, std::vector<double>{3, -1})).values() ==
        std::vector<double>{4, 1});
  CHECK_THROWS_AS(dense_forward(x, Tensor<double>::matrix(3, 2), Tensor<double>::vector(2)),
                  ShapeError);
}

TEST_CASE("dense forward matches a naive triple loop") {
  std::mt19937_64 rng(9);
  const auto x = random_tensor({3, 4}, rng);
  const auto w = random_tensor({4, 5}, rng);
  const auto b = random_tensor({5}, rng);
  const auto y = dense_forward(x, w, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < 4; ++k) s += x(i, k) * w(k, j);
      CHECK(y(i, j) == Approx(s).epsilon(1e-14));
    }
}

TEST_CASE("dense backward passes the finite-difference check") {
  std::mt19937_64 rng(21);
  auto x = random_param("x", {3, 4}, rng);
  auto w = random_param("w", {4, 2}, rng);
  auto b = random_param("b", {2}, rng);
  const auto r = random_tensor({3, 2}, rng);
  x.grad = dense_backward(x.value, w, b, r);
  const auto res = grad_check({&x, &w, &b}, [&] {
    return GradProbe{dot(dense_forward(x.value, w.value, b.value), r), 0};
  });
  CHECK(res.checked == 3 * 4 + 4 * 2 + 2);
  CHECK(res.max_relative_error < 1e-6);
}

TEST_CASE("layer norm: constant row, analytic pair") {
  const auto ones = Tensor<double>::vector(4, 1.0);
  const auto zeros = Tensor<double>::vector(4);
  const auto c = layer_norm(Tensor<double>::matrix(2, 4, 7.0), ones, zeros);
  for (double v : c.values()) CHECK(v == 0.0);
  const auto p = layer_norm(Tensor<double>({1, 2}, std::vector<double>{1, 3}),
                            Tensor<double>::vector(2, 1.0), Tensor<double>::vector(2), 0.0);
  CHECK(p[0] == Approx(-1.0).epsilon(1e-15));
  CHECK(p[1] == Approx(1.0).epsilon(1e-15));
  // With the default eps the pair is slightly shrunk: 1/sqrt(1 + 1e-5).
  const auto q = layer_norm(Tensor<double>({1, 2}, std::vector<double>{1, 3}),
                            Tensor<double>::vector(2, 1.0), Tensor<double>::vector(2));
  CHECK(q[1] == Approx(1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));
}

TEST_CASE("layer norm backward passes the finite-difference check") {
  std::mt19937_64 rng(4);
  auto x = random_param("x", {3, 5}, rng);
  auto gamma = random_param("gamma", {5}, rng);
  auto beta = random_param("beta", {5}, rng);
  const auto r = random_tensor({3, 5}, rng);
  LayerNormCache<double> cache;
  layer_norm(x.value, gamma.value, beta.value, 1e-5, &cache);
  x.grad = layer_norm_backward(cache, gamma, beta, r);
  const auto res = grad_check({&x, &gamma, &beta}, [&] {
    return GradProbe{dot(layer_norm(x.value, gamma.value, beta.value), r), 0};
  });
  CHECK(res.max_relative_error < 1e-6);
}

TEST_CASE("dropout contract") {
  RngState rng(1);
  const auto x = Tensor<double>::vector(10000, 1.0);
  CHECK(dropout(x, 0.3, Mode::eval, rng) == x);
  CHECK(dropout(x, 0.0, Mode::train, rng) == x);
  CHECK(dropout(x, 0.99, Mode::eval, rng) == x);

  RngState a(77), b(77);
  const auto ya = dropout(x, 0.3, Mode::train, a);
  const auto yb = dropout(x, 0.3, Mode::train, b);
  CHECK(ya == yb);
  double mean = 0;
  std::size_t zeros = 0;
  for (double v : ya.values()) {
    mean += v;
    zeros += v == 0.0;
    if (v != 0.0) CHECK(v == Approx(1.0 / 0.7).epsilon(1e-15));
  }
  mean /= static_cast<double>(ya.size());
  CHECK(std::abs(mean - 1.0) < 0.02);
  CHECK(zeros > 2700);
  CHECK(zeros < 3300);
  CHECK_THROWS_AS(dropout(x, 1.0, Mode::train, rng), InputError);
  CHECK_THROWS_AS(dropout(x, -0.1, Mode::train, rng), InputError);

  DropoutMask mask;
  RngState c(3);
  const auto y = dropout(x, 0.5, Mode::train, c, &mask);
  const auto g = dropout_backward(mask, x);
  CHECK(g == y);
}

TEST_CASE("cross entropy: analytic values, stability, label check") {
  const Tensor<double> zero({1, 2}, std::vector<double>{0, 0});
  const int l0[] = {0};
  CHECK(cross_entropy(zero, l0).loss == Approx(std::log(2.0)).epsilon(1e-15));
  const Tensor<double> big({1, 2}, std::vector<double>{1000, 0});
  const auto s = cross_entropy(big, l0);
  CHECK(std::isfinite(s.loss));
  CHECK(s.loss < 1e-12);
  const int bad[] = {2};
  CHECK_THROWS_AS(cross_entropy(zero, bad), InputError);
}

TEST_CASE("cross entropy gradient passes the finite-difference check") {
  std::mt19937_64 rng(8);
  auto logits = random_param("logits", {6, 2}, rng);
  const std::vector<int> labels = {0, 1, 1, 0, 1, 0};
  logits.grad = cross_entropy(logits.value, std::span<const int>(labels)).grad;
  const auto res = grad_check({&logits}, [&] {
    return GradProbe{cross_entropy(logits.value, std::span<const int>(labels)).loss, 0};
  });
  CHECK(res.max_relative_error < 1e-6);
}

TEST_CASE("gelu derivative passes the finite-difference check") {
  std::mt19937_64 rng(2);
  auto x = random_param("x", {4, 4}, rng);
  const auto r = random_tensor({4, 4}, rng);
  x.grad = gelu_backward(x.value, r);
  const auto res = grad_check({&x}, [&] { return GradProbe{dot(gelu(x.value), r), 0}; });
  CHECK(res.max_relative_error < 1e-6);
  CHECK(gelu(Tensor<double>::vector(1, 0.0))[0] == 0.0);
  CHECK(gelu(Tensor<double>::vector(1, 1.0))[0] ==
        Approx(0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)))).epsilon(1e-15));
}

TEST_CASE("grad check utility: linear exact, kinks skipped") {
  std::mt19937_64 rng(12);
  auto w = random_param("w", {5}, rng);
  const auto r = random_tensor({5}, rng);
  w.grad = r;
  const auto lin = grad_check({&w}, [&] { return GradProbe{dot(w.value, r), 0}; });
  CHECK(lin.max_relative_error < 1e-9);
  CHECK(lin.skipped == 0);

  // relu(x) at x = 0: the two probes land on different pieces.
  Parameter<double> k("k", Tensor<double>({3}, std::vector<double>{0.0, 1.0, -1.0}));
  k.grad = relu_backward(k.value, Tensor<double>::vector(3, 1.0));
  const auto kink = grad_check({&k}, [&] {
    std::uint64_t regime = 0;
    for (double v : k.value.values()) regime = regime_fingerprint(regime, v > 0);
    const auto y = relu(k.value);
    double s = 0;
    for (double v : y.values()) s += v;
    return GradProbe{s, regime};
  });
  CHECK(kink.skipped == 1);
  CHECK(kink.checked == 2);
  CHECK(kink.max_relative_error < 1e-9);
}

TEST_CASE("dense + relu composite away from kinks") {
  std::mt19937_64 rng(31);
  auto x = random_param("x", {2, 3}, rng);
  auto w = random_param("w", {3, 4}, rng);
  auto b = random_param("b", {4}, rng);
  const auto r = random_tensor({2, 4}, rng);
  const auto pre = dense_forward(x.value, w.value, b.value);
  x.grad = dense_backward(x.value, w, b, relu_backward(pre, r));
  const auto res = grad_check({&x, &w, &b}, [&] {
    const auto z = dense_forward(x.value, w.value, b.value);
    std::uint64_t regime = 0;
    for (double v : z.values()) regime = regime_fingerprint(regime, v > 0);
    return GradProbe{dot(relu(z), r), regime};
  });
  CHECK(res.max_relative_error < 1e-6);
}

TEST_CASE("AdamW: zero gradient and zero decay leave parameters alone") {
  Parameter<double> p("p", Tensor<double>({3}, std::vector<double>{1, -2, 3}));
  AdamW<double> opt({2e-5, 0.0});
  opt.step({&p});
  CHECK(p.value.values() == std::vector<double>{1, -2, 3});
  CHECK(opt.step_count() == 1);
}

TEST_CASE("AdamW: zero gradient applies only the decoupled decay") {
  Parameter<double> p("p", Tensor<double>({3}, std::vector<double>{1, -2, 3}));
  AdamW<double> opt({2e-5, 0.01});
  opt.step({&p});
  for (std::size_t i = 0; i < 3; ++i) {
    const double theta = std::vector<double>{1, -2, 3}[i];
    CHECK(p.value[i] == Approx(theta * (1 - 2e-7)).epsilon(1e-15));
  }
}

TEST_CASE("AdamW: one step from theta=1, g=1 matches the hand update") {
  Parameter<double> p("p", Tensor<double>::vector(1, 1.0));
  p.grad[0] = 1.0;
  AdamW<double> opt({2e-5, 0.01});
  opt.step({&p});
  const double m = 0.1 * 1.0, v = 0.001 * 1.0;
  const double m_hat = m / (1 - 0.9), v_hat = v / (1 - 0.999);
  const double expected = 1.0 - 2e-5 * (m_hat / (std::sqrt(v_hat) + 1e-8) + 0.01 * 1.0);
  CHECK(p.value[0] == Approx(expected).epsilon(1e-15));
  CHECK(opt.first_moments()[0][0] == Approx(m).epsilon(1e-15));
  CHECK(opt.second_moments()[0][0] == Approx(v).epsilon(1e-15));

  // Second step, gradient 0.5, continuing the same recurrences by hand.
  p.grad[0] = 0.5;
  const double theta1 = p.value[0];
  opt.step({&p});
  const double m2 = 0.9 * m + 0.1 * 0.5, v2 = 0.999 * v + 0.001 * 0.25;
  const double update = (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(p.value[0] == Approx(theta1 - 2e-5 * (update + 0.01 * theta1)).epsilon(1e-15));
}

TEST_CASE("AdamW with zero decay reduces to Adam") {
  Parameter<double> p("p", Tensor<double>::vector(1, 4.0));
  AdamW<double> opt({0.1, 0.0});
  double m = 0, v = 0, theta = 4.0;
  for (int t = 1; t <= 5; ++t) {
    const double g = 2 * theta;  // gradient of theta^2
    p.grad[0] = g;
    opt.step({&p});
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    theta -= 0.1 * (m / (1 - std::pow(0.9, t))) /
             (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    CHECK(p.value[0] == Approx(theta).epsilon(1e-13));
  }
}

TEST_CASE("AdamW refuses a non-finite gradient without touching anything") {
  Parameter<double> a("a", Tensor<double>::vector(2, 1.0));
  Parameter<double> b("b", Tensor<double>::vector(2, 1.0));
  a.grad[0] = 0.5;
  b.grad[1] = std::numeric_limits<double>::quiet_NaN();
  AdamW<double> opt;
  CHECK_THROWS_AS(opt.step({&a, &b}), NumericalError);
  CHECK(a.value.values() == std::vector<double>{1.0, 1.0});
  CHECK(opt.step_count() == 0);
}

TEST_CASE("normal init is seeded") {
  RngState a(5), b(5), c(6);
  const auto x = normal_init<float>({10, 10}, 0.02, a);
  CHECK(x == normal_init<float>({10, 10}, 0.02, b));
  CHECK(!(x == normal_init<float>({10, 10}, 0.02, c)));
}

}  // TEST_SUITE
