#include <algorithm>

#include "doctest.h"
#include "nullscan/scan.hpp"
#include "support.hpp"

using namespace nullscan;
using test_support::TempDir;
using test_support::write_text;

namespace {

std::vector<std::string> names(std::string_view src) {
  std::vector<std::string> out;
  for (const auto &f : split_functions(src)) out.push_back(f.name);
  return out;
}

std::string_view text_of(std::string_view src, const FunctionSpan &f) {
  return src.substr(f.begin, f.end - f.begin);
}

/// Flags any function mentioning `alloc_buffer`, with logit margin 2.
class KeywordClassifier final : public Classifier {
 public:
  KeywordClassifier()
      : tok_(Tokenizer::fallback(FallbackVocab{4096, {{"alloc_buffer", 5}}}, 256)) {}
  std::string kind() const override { return "keyword"; }
  const Tokenizer &tokenizer() const override { return tok_; }
  VulnPrediction predict(const TokenizedSample &s) const override {
    const bool hit = std::count(s.token_ids.begin(), s.token_ids.end(), 5) > 0;
    return hit ? make_prediction(0, 2) : make_prediction(1, -1);
  }
  double accumulate_gradients(const TokenizedSample &, int, double, RngState &) override {
    return 0;
  }
  ParameterRefs<float> parameters() override { return {}; }
  nlohmann::ordered_json config_json() const override { return {{"kind", "keyword"}}; }

 private:
  Tokenizer tok_;
};

}  // namespace

TEST_SUITE("scan") {

TEST_CASE("masking blanks comments, literals and directives but keeps offsets") {
  const std::string src =
      "#include <x.h>\nint a = '{'; // }\nchar *s = \"{\\\"}\"; /* { */ int n = 1'000;\n";
  const auto m = mask_source(src);
  REQUIRE(m.size() == src.size());
  CHECK(std::count(m.begin(), m.end(), '{') == 0);
  CHECK(std::count(m.begin(), m.end(), '}') == 0);
  CHECK(std::count(m.begin(), m.end(), '\n') == std::count(src.begin(), src.end(), '\n'));
  CHECK(m.find("int a =") != std::string::npos);
  CHECK(m.find("int n = 1") != std::string::npos);
  CHECK(m.find("include") == std::string::npos);

  const std::string continued = "#define M(x) \\\n  { x }\nint f(void) { return 0; }\n";
  CHECK(names(continued) == std::vector<std::string>{"f"});
}

TEST_CASE("plain C functions with exact byte ranges") {
  const std::string src =
      "static int *find(struct list *l, int key)\n"
      "{\n"
      "  for (; l; l = l->next) { if (l->key == key) return &l->key; }\n"
      "  return 0;\n"
      "}\n"
      "\n"
      "void touch(int *p) { *p = 1; }\n";
  const auto fs = split_functions(src);
  REQUIRE(fs.size() == 2);
  CHECK(fs[0].name == "find");
  CHECK(fs[0].begin == 0);
  CHECK(fs[0].line == 1);
  CHECK(text_of(src, fs[0]).back() == '}');
  CHECK(text_of(src, fs[0]).find("return 0;") != std::string::npos);
  CHECK(fs[1].name == "touch");
  CHECK(fs[1].line == 7);
  CHECK(text_of(src, fs[1]) == "void touch(int *p) { *p = 1; }");
}

TEST_CASE("braces inside comments and strings do not split functions") {
  const std::string src =
      "int a(void) {\n  /* } */ const char *s = \"}\"; char c = '}';\n  return 1; // }\n}\n"
      "int b(void) { return 2; }\n";
  const auto fs = split_functions(src);
  CHECK(names(src) == std::vector<std::string>{"a", "b"});
  CHECK(fs[1].line == 5);
}

TEST_CASE("initialisers, enums and struct definitions are skipped") {
  const std::string src =
      "static const int table[] = { 1, 2, 3 };\n"
      "enum color { RED, GREEN };\n"
      "struct point { int x, y; };\n"
      "struct point origin = { 0, 0 };\n"
      "int use(struct point p) { return p.x; }\n";
  CHECK(names(src) == std::vector<std::string>{"use"});
}

TEST_CASE("namespaces, extern C and classes are descended into") {
  const std::string src =
      "namespace io {\n"
      "extern \"C\" {\n"
      "int raw_read(int fd) { return fd; }\n"
      "}\n"
      "class Reader {\n"
      " public:\n"
      "  int next() { return pos_++; }\n"
      " private:\n"
      "  int pos_ = 0;\n"
      "};\n"
      "int Reader_size(const Reader &r) { return 0; }\n"
      "}  // namespace io\n"
      "void io::flush() {}\n";
  CHECK(names(src) == std::vector<std::string>{"raw_read", "next", "Reader_size", "io::flush"});
}

TEST_CASE("K&R definitions and macros before bodies") {
  const std::string src =
      "int old_style(a, b)\n  int a;\n  char *b;\n{\n  return a + *b;\n}\n"
      "#ifdef X\nint guarded(void) { return 1; }\n#endif\n";
  const auto fs = split_functions(src);
  REQUIRE(fs.size() == 2);
  CHECK(fs[0].name == "old_style");
  CHECK(fs[0].begin == 0);
  CHECK(fs[1].name == "guarded");
  CHECK(fs[1].line == 8);
}

TEST_CASE("statements that merely end before a brace are not K&R headers") {
  const std::string src =
      "int x;\nchar *y;\n{ stray(); }\nint f(void) { return 0; }\n"
      "int g(int a) ; { }\n";
  CHECK(names(src) == std::vector<std::string>{"f"});
}

TEST_CASE("unterminated function runs to end of input") {
  const std::string src = "int broken(void) {\n  if (x) {\n";
  const auto fs = split_functions(src);
  REQUIRE(fs.size() == 1);
  CHECK(fs[0].end == src.size());
  CHECK(split_functions("").empty());
}

TEST_CASE("collect_sources filters extensions and sorts") {
  TempDir dir("scan-collect");
  std::filesystem::create_directories(dir / "sub");
  write_text(dir / "b.c", "");
  write_text(dir / "a.cpp", "");
  write_text(dir / "sub/z.h", "");
  write_text(dir / "notes.txt", "");
  const auto files = collect_sources({dir.path()});
  REQUIRE(files.size() == 3);
  CHECK(files[0].filename() == "a.cpp");
  CHECK(files[1].filename() == "b.c");
  CHECK(files[2].filename() == "z.h");
  CHECK_THROWS_AS(collect_sources({dir / "missing"}), InputError);
}

TEST_CASE("report flags only confident vulnerable functions") {
  TempDir dir("scan-report");
  write_text(dir / "one.c",
             "int safe(int *p) { return p ? *p : 0; }\n"
             "int bad(void) { char *b = alloc_buffer(8); return b[0]; }\n");
  write_text(dir / "two.c", "void other(void) { alloc_buffer(1)[0] = 1; }\n");
  KeywordClassifier model;
  const auto files = collect_sources({dir.path()});

  ScanOptions low;
  low.threshold = 0.5;
  const auto r = scan_files(model, files, low);
  REQUIRE(r.entries.size() == 3);
  CHECK(r.files == 2);
  CHECK(r.entries[0].function.name == "safe");
  CHECK_FALSE(r.entries[0].reported);
  CHECK(r.entries[1].reported);
  CHECK(r.entries[2].reported);
  CHECK(r.vulnerable_count() == 2);
  CHECK(r.exit_code() == 1);

  ScanOptions high;
  high.threshold = 0.9;  // sigmoid(2) ~ 0.881
  const auto h = scan_files(model, files, high);
  CHECK(h.vulnerable_count() == 2);
  CHECK(h.reported_count() == 0);
  CHECK(h.exit_code() == 0);

  auto copy = r;
  copy.timestamp = "2026-01-01T00:00:00Z";
  const auto j = copy.to_json();
  CHECK(j["schema_version"] == 1);
  CHECK(j["tool"]["name"] == "nullscan");
  CHECK(j["tool"]["version"] == "0.1.0");
  CHECK(j["timestamp"] == "2026-01-01T00:00:00Z");
  CHECK(j["config"]["threshold"] == 0.5);
  CHECK(j["summary"]["files"] == 2);
  CHECK(j["summary"]["functions"] == 3);
  CHECK(j["summary"]["vulnerable"] == 2);
  CHECK(j["summary"]["reported"] == 2);
  const auto &e = j["entries"][1];
  CHECK(e["function"] == "bad");
  CHECK(e["line"] == 2);
  CHECK(e["verdict"] == "vulnerable");
  CHECK(e["logits"] == nlohmann::ordered_json::array({0.0, 2.0}));
  CHECK(e["byte_range"].size() == 2);
}

TEST_CASE("thread count does not change the report") {
  TempDir dir("scan-threads");
  for (int i = 0; i < 9; ++i)
    write_text(dir / ("f" + std::to_string(i) + ".c"),
               "int g" + std::to_string(i) + "(void) { return " +
                   (i % 3 ? "0" : "*alloc_buffer(4)") + "; }\n");
  KeywordClassifier model;
  const auto files = collect_sources({dir.path()});
  ScanOptions one, many;
  one.threads = 1;
  many.threads = 4;
  CHECK(scan_files(model, files, one).to_json() == scan_files(model, files, many).to_json());
}

TEST_CASE("empty input yields an empty clean report") {
  TempDir dir("scan-empty");
  KeywordClassifier model;
  const auto r = scan_files(model, collect_sources({dir.path()}));
  CHECK(r.entries.empty());
  CHECK(r.exit_code() == 0);
  CHECK(r.to_json()["summary"]["functions"] == 0);
}

TEST_CASE("timestamps are UTC ISO-8601") {
  const auto t = utc_timestamp();
  REQUIRE(t.size() == 20);
  CHECK(t[4] == '-');
  CHECK(t[10] == 'T');
  CHECK(t.back() == 'Z');
}

}  // TEST_SUITE
