#include <cmath>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "nullscan/checkpoint.hpp"
#include "nullscan/encoder.hpp"
#include "nullscan/grad_check.hpp"
#include "support.hpp"

using namespace nullscan;
using doctest::Approx;
using test_support::random_sample;
using test_support::small_encoder;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor<double> &t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

Mat affine(const Mat &x, const Tensor<double> &w, const Tensor<double> &b) {
  Mat y(x.size(), std::vector<double>(w.cols()));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < w.rows(); ++k) s += x[i][k] * w(k, j);
      y[i][j] = s;
    }
  return y;
}

// Straightforward multi-head attention written from the textbook formula.
Mat naive_attention(const Mat &x, const std::vector<std::uint8_t> &mask,
                    const EncoderLayerWeights<double> &w, std::size_t heads) {
  const Mat q = affine(x, w.query_w.value, w.query_b.value);
  const Mat k = affine(x, w.key_w.value, w.key_b.value);
  const Mat v = affine(x, w.value_w.value, w.value_b.value);
  const std::size_t n = x.size(), hidden = x[0].size(), d = hidden / heads;
  Mat ctx(n, std::vector<double>(hidden, 0.0));
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> score(n);
      double mx = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < d; ++c) s += q[i][h * d + c] * k[j][h * d + c];
        score[j] = mask[j] ? s / std::sqrt(static_cast<double>(d)) : -1e9;
        mx = std::max(mx, score[j]);
      }
      double z = 0;
      for (double &s : score) z += (s = std::exp(s - mx));
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < d; ++c) ctx[i][h * d + c] += score[j] / z * v[j][h * d + c];
    }
  return affine(ctx, w.attn_out_w.value, w.attn_out_b.value);
}

Mat naive_layer_norm(const Mat &x, const Tensor<double> &g, const Tensor<double> &b) {
  Mat y = x;
  for (auto &row : y) {
    double mean = 0, var = 0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(row.size());
    for (std::size_t j = 0; j < row.size(); ++j)
      row[j] = (row[j] - mean) / std::sqrt(var + 1e-5) * g[j] + b[j];
  }
  return y;
}

Mat add(const Mat &a, const Mat &b) {
  Mat c = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) c[i][j] += b[i][j];
  return c;
}

Mat naive_layer(const Mat &x, const std::vector<std::uint8_t> &mask,
                const EncoderLayerWeights<double> &w, std::size_t heads) {
  const Mat h1 = naive_layer_norm(add(x, naive_attention(x, mask, w, heads)),
                                  w.attn_norm_gamma.value, w.attn_norm_beta.value);
  Mat f = affine(h1, w.ffn_in_w.value, w.ffn_in_b.value);
  for (auto &row : f)
    for (double &v : row) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  f = affine(f, w.ffn_out_w.value, w.ffn_out_b.value);
  return naive_layer_norm(add(h1, f), w.ffn_norm_gamma.value, w.ffn_norm_beta.value);
}

// Every parameter perturbed away from its init so biases and norms matter.
template <typename T>
void jitter(ParameterRefs<T> params, std::uint64_t seed, double sd = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, sd);
  for (auto *p : params)
    for (auto &v : p->value.values()) v += static_cast<T>(d(rng));
}

Tensor<double> random_states(std::size_t n, std::size_t h, std::mt19937_64 &rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor<double> t = Tensor<double>::matrix(n, h);
  for (auto &v : t.values()) v = d(rng);
  return t;
}

double dot(const Tensor<double> &a, const Tensor<double> &b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// A key bias shifts every score in a query row by the same amount, so its
// true gradient is zero and finite differences only see roundoff. Those
// parameters are checked for a vanishing analytic gradient instead.
ParameterRefs<double> without_key_bias(ParameterRefs<double> params) {
  ParameterRefs<double> kept;
  for (auto *p : params) {
    if (p->name.find("attention.key.bias") != std::string::npos) {
      for (double g : p->grad.values()) CHECK(std::abs(g) < 1e-12);
      continue;
    }
    kept.push_back(p);
  }
  return kept;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("presets") {
  const auto base = EncoderConfig::preset("codebert-base", 50265);
  CHECK(base.num_layers == 12);
  CHECK(base.hidden_dim == 768);
  CHECK(base.num_heads == 12);
  CHECK(base.ffn_dim == 3072);
  CHECK(base.max_positions == 512);
  const auto tiny = EncoderConfig::preset("tiny", 4096);
  CHECK(tiny.num_layers == 2);
  CHECK(tiny.hidden_dim == 64);
  CHECK(EncoderConfig::from_json(tiny.to_json()) == tiny);
  CHECK_THROWS_AS(EncoderConfig::preset("huge", 10), InputError);
  auto bad = tiny;
  bad.num_heads = 5;
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("attention matches the textbook formula, masked keys ignored") {
  const auto c = small_encoder();
  RngState init(3);
  auto layer = EncoderLayerWeights<double>::init(c, 0, init);
  jitter(layer.parameters(), 4);
  std::mt19937_64 rng(5);
  const auto x = random_states(5, c.hidden_dim, rng);
  const std::vector<std::uint8_t> mask = {1, 1, 1, 0, 0};
  RngState unused(0);
  AttentionCache<double> cache;
  const auto got = multi_head_attention(x, mask, layer, c, Mode::eval, unused, &cache);
  const Mat want = naive_attention(to_mat(x), mask, layer, c.num_heads);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < c.hidden_dim; ++j)
      CHECK(got(i, j) == Approx(want[i][j]).epsilon(1e-12));
  for (const auto &p : cache.probs)
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(std::abs(p(i, 0) + p(i, 1) + p(i, 2) - 1.0) < 1e-6);
      CHECK(p(i, 3) == 0.0);
      CHECK(p(i, 4) == 0.0);
    }
}

TEST_CASE("encoder layer matches a naive post-norm layer") {
  const auto c = small_encoder();
  RngState init(8);
  auto layer = EncoderLayerWeights<double>::init(c, 1, init);
  jitter(layer.parameters(), 9);
  std::mt19937_64 rng(10);
  const auto x = random_states(6, c.hidden_dim, rng);
  const std::vector<std::uint8_t> mask = {1, 1, 1, 1, 0, 0};
  RngState unused(0);
  const auto got = encoder_layer(x, mask, layer, c, Mode::eval, unused);
  const Mat want = naive_layer(to_mat(x), mask, layer, c.num_heads);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < c.hidden_dim; ++j)
      CHECK(got(i, j) == Approx(want[i][j]).epsilon(1e-10));
}

TEST_CASE("encode yields num_layers + 1 states of [seq, hidden]") {
  const auto c = small_encoder();
  RngState init(1);
  const auto w = EncoderWeights<double>::init(c, init);
  std::mt19937_64 rng(2);
  const auto s = random_sample(rng, 3, 8, c.vocab_size);
  const auto acts = encode(s, w, c);
  REQUIRE(acts.states.size() == c.num_layers + 1);
  for (const auto &st : acts.states) CHECK(st.shape() == Shape{8, c.hidden_dim});
  CHECK(encode(s, w, c).states == acts.states);
}

TEST_CASE("out-of-range inputs are rejected") {
  const auto c = small_encoder(40, 8);
  RngState init(1);
  const auto w = EncoderWeights<float>::init(c, init);
  auto s = frame_tokens(std::vector<TokenId>{5, 6}, {}, 8);
  s.token_ids[1] = 40;
  CHECK_THROWS_AS(encode(s, w, c), InputError);
  const auto long_sample = frame_tokens(std::vector<TokenId>{5, 6}, {}, 9);
  CHECK_THROWS_AS(encode(long_sample, w, c), ShapeError);
}

TEST_CASE("pooling modes") {
  LayerActivations<double> one;
  one.states = {Tensor<double>({1, 2}, std::vector<double>{9, 9}),
                Tensor<double>({2, 2}, std::vector<double>{1, 2, 7, 7})};
  CHECK(pool(one, PoolingMode::final_cls).values() == std::vector<double>{1, 2});

  LayerActivations<double> same;
  same.states = {Tensor<double>({2, 2}, std::vector<double>{3, 4, 0, 0}),
                 Tensor<double>({2, 2}, std::vector<double>{3, 4, 1, 1})};
  CHECK(pool(same, PoolingMode::mean_layers_cls).values() == std::vector<double>{3, 4});

  LayerActivations<double> three;
  for (int s = 0; s < 3; ++s)
    three.states.push_back(Tensor<double>(
        {2, 2}, std::vector<double>{double(s), double(10 + s), 99.0, 99.0}));
  CHECK(pool(three, PoolingMode::concat_layers_cls).values() ==
        std::vector<double>{0, 10, 1, 11, 2, 12});

  const auto c = small_encoder();
  CHECK(pooled_dim(PoolingMode::final_cls, c) == c.hidden_dim);
  CHECK(pooled_dim(PoolingMode::mean_layers_cls, c) == c.hidden_dim);
  CHECK(pooled_dim(PoolingMode::concat_layers_cls, c) == 3 * c.hidden_dim);
  CHECK(parse_pooling_mode("concat_layers_cls") == PoolingMode::concat_layers_cls);
  CHECK_THROWS_AS(parse_pooling_mode("max"), InputError);
}

TEST_CASE("pad-region token ids do not reach the pooled feature") {
  const auto c = EncoderConfig::preset("tiny", 4096);
  RngState init(17);
  auto w = EncoderWeights<float>::init(c, init);
  jitter(w.parameters(), 18, 0.05);
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_sample(rng, 1 + rng() % 40, 64, c.vocab_size);
    auto t = s;
    for (std::size_t i = s.true_length; i < 64; ++i) t.token_ids[i] = 5 + rng() % 4000;
    const auto a = encode(s, w, c), b = encode(t, w, c);
    for (auto mode : {PoolingMode::final_cls, PoolingMode::mean_layers_cls,
                      PoolingMode::concat_layers_cls}) {
      const auto pa = pool(a, mode), pb = pool(b, mode);
      double diff = 0;
      for (std::size_t i = 0; i < pa.size(); ++i) diff += (pa[i] - pb[i]) * (pa[i] - pb[i]);
      CHECK(std::sqrt(diff) < 1e-6);
    }
  }
}

TEST_CASE("one tiny encoder layer passes the finite-difference check") {
  const auto c = EncoderConfig::preset("tiny", 4096);
  RngState init(23);
  auto layer = EncoderLayerWeights<double>::init(c, 0, init);
  jitter(layer.parameters(), 24, 0.05);
  std::mt19937_64 rng(25);
  Parameter<double> x("x", random_states(6, c.hidden_dim, rng));
  const auto r = random_states(6, c.hidden_dim, rng);
  const std::vector<std::uint8_t> mask = {1, 1, 1, 1, 1, 0};
  RngState unused(0);
  EncoderLayerCache<double> cache;
  encoder_layer(x.value, mask, layer, c, Mode::eval, unused, &cache);
  x.grad = encoder_layer_backward(cache, layer, c, r);
  auto params = without_key_bias(layer.parameters());
  params.push_back(&x);
  const auto res = grad_check(params, [&] {
    RngState u(0);
    return GradProbe{dot(encoder_layer(x.value, mask, layer, c, Mode::eval, u), r), 0};
  });
  CAPTURE(res.worst);
  CHECK(res.max_relative_error < 1e-4);
  CHECK(res.checked > 500);
}

TEST_CASE("encoder layer gradients are exact under a fixed train-mode dropout stream") {
  auto c = small_encoder();
  c.dropout_p = 0.2;
  RngState init(41);
  auto layer = EncoderLayerWeights<double>::init(c, 0, init);
  jitter(layer.parameters(), 42);
  std::mt19937_64 rng(43);
  Parameter<double> x("x", random_states(5, c.hidden_dim, rng));
  const auto r = random_states(5, c.hidden_dim, rng);
  const std::vector<std::uint8_t> mask = {1, 1, 1, 1, 0};
  RngState stream(44);
  EncoderLayerCache<double> cache;
  encoder_layer(x.value, mask, layer, c, Mode::train, stream, &cache);
  x.grad = encoder_layer_backward(cache, layer, c, r);
  auto params = without_key_bias(layer.parameters());
  params.push_back(&x);
  const auto res = grad_check(params, [&] {
    RngState replay(44);
    return GradProbe{dot(encoder_layer(x.value, mask, layer, c, Mode::train, replay), r), 0};
  });
  CAPTURE(res.worst);
  CHECK(res.max_relative_error < 1e-6);
}

TEST_CASE("full encoder stack passes the finite-difference check in every pooling mode") {
  const auto c = small_encoder();
  std::mt19937_64 rng(51);
  const auto s = random_sample(rng, 4, 8, c.vocab_size);
  for (auto mode : {PoolingMode::final_cls, PoolingMode::mean_layers_cls,
                    PoolingMode::concat_layers_cls}) {
    RngState init(52);
    auto w = EncoderWeights<double>::init(c, init);
    jitter(w.parameters(), 53);
    const auto r = random_states(1, pooled_dim(mode, c), rng);
    Tensor<double> rv({pooled_dim(mode, c)}, r.values());
    EncoderTrace<double> trace;
    RngState u(0);
    const auto acts = encode(s, w, c, Mode::eval, u, &trace);
    encode_backward(trace, w, c, pool_backward(acts, mode, rv));
    const auto res = grad_check(without_key_bias(w.parameters()), [&] {
      return GradProbe{dot(pool(encode(s, w, c), mode), rv), 0};
    });
    CAPTURE(to_string(mode));
    CAPTURE(res.worst);
    CHECK(res.max_relative_error < 1e-4);
  }
}

TEST_CASE("imported RoBERTa weights reproduce the reference hidden states") {
  const auto dir = test_support::source_dir() / "tests/data/roberta_tiny";
  const auto expected = nlohmann::json::parse(test_support::read_text(dir / "expected.json"));
  EncoderConfig c;
  c.vocab_size = 50;
  c.hidden_dim = 16;
  c.num_layers = 2;
  c.num_heads = 2;
  c.ffn_dim = 32;
  c.max_positions = 8;
  const auto w = import_roberta_encoder(read_safetensors(dir / "model.safetensors"), c);

  TokenizedSample s;
  s.token_ids = expected["input_ids"].get<std::vector<TokenId>>();
  s.attention_mask = expected["attention_mask"].get<std::vector<std::uint8_t>>();
  s.true_length = 5;
  const auto acts = encode(s, w, c);
  const auto &ref = expected["hidden_states"];
  REQUIRE(ref.size() == acts.states.size());
  double worst = 0;
  for (std::size_t l = 0; l < acts.states.size(); ++l)
    for (std::size_t i = 0; i < s.true_length; ++i)
      for (std::size_t j = 0; j < c.hidden_dim; ++j)
        worst = std::max(worst, std::abs(double(acts.states[l](i, j)) -
                                         ref[l][i][j].get<double>()));
  CHECK(worst < 1e-5);

  auto too_long = c;
  too_long.max_positions = 9;  // the fixture has 10 rows, 2 reserved
  CHECK_THROWS_AS(import_roberta_encoder(read_safetensors(dir / "model.safetensors"), too_long),
                  CheckpointError);
  auto wrong = c;
  wrong.ffn_dim = 31;
  CHECK_THROWS_AS(import_roberta_encoder(read_safetensors(dir / "model.safetensors"), wrong),
                  CheckpointError);
}

}  // TEST_SUITE
