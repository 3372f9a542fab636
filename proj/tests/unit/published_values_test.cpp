// Values the implementation takes from the published description, checked
// against the text of paper.md rather than restated literals.
#include <regex>

#include "doctest.h"
#include "nullscan/dataset.hpp"
#include "nullscan/head.hpp"
#include "nullscan/run_config.hpp"
#include "support.hpp"

using namespace nullscan;

namespace {

const std::string &paper() {
  static const std::string text =
      test_support::read_text(test_support::source_dir() / "paper.md");
  return text;
}

/// The hyperparameter table row that mentions `marker`.
std::string row(const std::string &marker) {
  const auto hit = paper().find(marker);
  REQUIRE_MESSAGE(hit != std::string::npos, marker);
  const auto start = paper().rfind("\\begin{tabular}", hit);
  const auto end = paper().find("\\hline", hit);
  return paper().substr(start, end - start);
}

std::string field(const std::string &cell, const std::string &pattern) {
  std::smatch m;
  REQUIRE_MESSAGE(std::regex_search(cell, m, std::regex(pattern)), pattern);
  return m[1].str();
}

std::size_t count_of(const std::string &s) {
  std::string digits;
  for (char c : s)
    if (c != ',') digits += c;
  return std::stoul(digits);
}

}  // namespace

TEST_SUITE("published") {

TEST_CASE("classifier hyperparameters") {
  REQUIRE_FALSE(paper().empty());
  const auto cell = row("dense\\_output dimension");
  const RunConfig c;
  CHECK(c.max_length == std::stoul(field(cell, R"(max\\_length = (\d+))")));
  CHECK(c.batch_size == std::stoul(field(cell, R"(batch\\_size = (\d+))")));
  CHECK(c.drop_out == std::stod(field(cell, R"(drop\\_out = ([0-9.]+))")));
  CHECK(c.dense_output_dimension ==
        std::stoul(field(cell, R"(dense\\_output dimension = (\d+))")));
  CHECK(c.learning_rate == std::stod(field(cell, R"(learning rate: ([0-9.e-]+))")));
  CHECK(c.weight_decay == std::stod(field(cell, R"(weight\\_decay=([0-9.]+))")));
  CHECK(field(cell, R"(activation\\_function = (\w+))") == "ReLU");
  CHECK(field(cell, R"(logistic\\_function = (\w+))") == "sigmoid");

  // The encoder row gives the epoch count and depth.
  const auto enc = row("transformer\\_layers");
  CHECK(c.num_train_epochs == std::stoul(field(enc, R"(num\\_train\\_epochs = (\d+))")));
  CHECK(EncoderConfig::preset("codebert-base", 50265).num_layers ==
        std::stoul(field(enc, R"(transformer\\_layers = (\d+))")));
  CHECK(c.weight_decay == std::stod(field(enc, R"(weight\\_decay = ([0-9.]+))")));

  // The head built from defaults has the published shape.
  RngState rng(1);
  auto model = TransformerModel<float>::init(EncoderConfig::preset("tiny", 64),
                                             PoolingMode::final_cls, c.dense_output_dimension,
                                             c.drop_out, rng);
  CHECK(model.head.dense_w.shape()[1] == 512);
  CHECK(model.head_config.dropout_p == 0.3);
}

TEST_CASE("LSTM baseline hyperparameters") {
  const auto cell = row("max\\_vocab\\_size");
  const LstmConfig c;
  CHECK(c.max_vocab_size == std::stoul(field(cell, R"(max\\_vocab\\_size = (\d+))")));
  CHECK(c.max_sequence_length ==
        std::stoul(field(cell, R"(max\\_sequence\\_length = (\d+))")));
  CHECK(c.embedding_dim == std::stoul(field(cell, R"(embedding\\_dim = (\d+))")));
  CHECK(c.units == std::vector<std::size_t>{std::stoul(field(cell, R"(units = \((\d+),)")),
                                            std::stoul(field(cell, R"(units = \(\d+, (\d+)\))"))});
  CHECK(field(cell, R"(activation = '(\w+)')") == "relu");
}

TEST_CASE("split sizes follow from undersampling the published counts") {
  std::smatch m;
  REQUIRE(std::regex_search(
      paper(), m,
      std::regex(R"(Train Set\s*&\s*([\d,]+)\s*&\s*([\d,]+)\s*&\s*([\d,]+))")));
  const auto train_true = count_of(m[1]), train_false = count_of(m[2]), train_total = count_of(m[3]);
  REQUIRE(std::regex_search(
      paper(), m, std::regex(R"(Test Set\s*&\s*([\d,]+)\s*&\s*([\d,]+)\s*&\s*([\d,]+))")));
  const auto test_total = count_of(m[3]);
  CHECK(train_true == train_false);
  CHECK(count_of(m[1]) + count_of(m[2]) == test_total);
  REQUIRE(std::regex_search(paper(), m, std::regex(R"(we collected ([\d,]+) samples)")));
  CHECK(train_total + test_total == count_of(m[1]));

  // An unbalanced pool with the published positive count balances to the
  // published training size.
  std::vector<CodeSample> pool;
  for (std::size_t i = 0; i < train_true + 3 * train_false; ++i)
    pool.push_back({"p" + std::to_string(i), "x", i < train_true ? 1 : 0});
  const auto balanced = balance(LabeledDataset(std::move(pool)), 42);
  CHECK(balanced.size() == train_total);
  CHECK(balanced.count(1) == train_true);
}

}  // TEST_SUITE
