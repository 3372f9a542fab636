#include "doctest.h"
#include "nullscan/checkpoint.hpp"
#include "nullscan/head.hpp"
#include "nullscan/run_config.hpp"
#include "support.hpp"

using namespace nullscan;
using json = nlohmann::ordered_json;

TEST_SUITE("run_config") {

TEST_CASE("defaults carry the published fine-tuning hyperparameters") {
  const RunConfig c;
  const auto t = c.train_config();
  CHECK(t.learning_rate == 2e-5);
  CHECK(t.weight_decay == 0.01);
  CHECK(t.epochs == 3);
  CHECK(t.batch_size == 8);
  CHECK(c.max_length == 512);
  CHECK(c.drop_out == 0.3);
  CHECK(c.dense_output_dimension == 512);
  CHECK(c.lstm.max_vocab_size == 10000);
  CHECK(c.lstm.max_sequence_length == 500);
  CHECK(c.lstm.embedding_dim == 100);
  CHECK(c.lstm.units == std::vector<std::size_t>{64, 32});
}

TEST_CASE("shipped configs parse") {
  const auto dir = test_support::source_dir() / "configs";
  const auto base = RunConfig::load(dir / "default.json");
  CHECK(base.encoder_preset == "codebert-base");
  CHECK(base.transformer_layers == std::optional<std::size_t>(12));
  CHECK(base.make_tokenizer().vocab_size() == 50265);
  const auto tiny = RunConfig::load(dir / "tiny.json");
  CHECK(tiny.learning_rate == 2e-3);
  CHECK(tiny.make_tokenizer().max_length() == 64);
  const auto lstm = RunConfig::load(dir / "lstm.json");
  CHECK(lstm.model == "lstm");
  CHECK(lstm.learning_rate == 1e-3);
}

TEST_CASE("round trip through JSON") {
  RunConfig c;
  c.encoder_preset = "tiny";
  c.pooling = PoolingMode::mean_layers_cls;
  c.seed = 9;
  c.max_length = 32;
  c.transformer_layers = 1;
  const auto back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.pooling == PoolingMode::mean_layers_cls);
}

TEST_CASE("bad configs are rejected") {
  CHECK_THROWS_WITH_AS(RunConfig::from_json(json{{"learning_rat", 1e-3}}),
                       doctest::Contains("unknown config key 'learning_rat'"), InputError);
  CHECK_THROWS_WITH_AS(RunConfig::from_json(json{{"batch_size", "eight"}}),
                       doctest::Contains("wrong type"), InputError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"model", "gru"}}), InputError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"drop_out", 1.0}}), InputError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"pooling", "max"}}), InputError);
  CHECK_THROWS_AS(RunConfig::from_json(json::array()), InputError);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.json"), InputError);
  test_support::TempDir dir("cfg-bad");
  test_support::write_text(dir / "broken.json", "{ \"seed\": ");
  CHECK_THROWS_AS(RunConfig::load(dir / "broken.json"), InputError);
}

TEST_CASE("build assembles the configured model") {
  auto c = RunConfig::from_json(json{{"encoder_preset", "tiny"},
                                     {"max_length", 32},
                                     {"transformer_layers", 1},
                                     {"pooling", "concat_layers_cls"},
                                     {"dense_output_dimension", 24}});
  const auto model = c.build(3);
  auto *t = dynamic_cast<TransformerClassifier *>(model.get());
  REQUIRE(t != nullptr);
  CHECK(t->model().encoder_config.num_layers == 1);
  CHECK(t->model().head_config.input_dim == 2 * 64);
  CHECK(t->model().head_config.dense_dim == 24);
  CHECK(t->tokenizer().max_length() == 32);
  const auto again = c.build(3);
  const auto s = model->tokenize("int f(void) { return 0; }");
  CHECK(again->predict(s) == model->predict(s));

  const auto lstm = RunConfig::from_json(json{{"model", "lstm"}, {"units", {4}},
                                              {"embedding_dim", 3}, {"dense_units", 5}})
                        .build(1);
  CHECK(lstm->kind() == "lstm");

  const auto too_long = RunConfig::from_json(json{{"encoder_preset", "tiny"}, {"max_length", 65}});
  CHECK_THROWS_AS(too_long.build(1), InputError);
}

TEST_CASE("external weights must match the configured encoder") {
  const auto dir = test_support::source_dir() / "tests/data/roberta_tiny";
  const auto c = RunConfig::from_json(json{{"encoder_preset", "tiny"},
                                           {"max_length", 32},
                                           {"init_weights", "model.safetensors"}},
                                      dir);
  CHECK(c.init_weights == dir / "model.safetensors");
  CHECK_THROWS_AS(c.build(1), CheckpointError);
}

}  // TEST_SUITE
