#include "nullscan/scan.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "nullscan/errors.hpp"

namespace nullscan {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---- masking ---------------------------------------------------------------

std::string mask_source(std::string_view src) {
  enum class St { code, line_comment, block_comment, string, chr, preproc };
  std::string out(src);
  St st = St::code;
  bool line_start = true;  // only whitespace seen since the last newline
  const std::size_t n = src.size();
  auto blank = [&](std::size_t i) {
    if (out[i] != '\n') out[i] = ' ';
  };
  for (std::size_t i = 0; i < n; ++i) {
    const char c = src[i];
    const char next = i + 1 < n ? src[i + 1] : '\0';
    switch (st) {
      case St::code:
        if (c == '#' && line_start) {
          st = St::preproc;
          blank(i);
        } else if (c == '/' && next == '/') {
          st = St::line_comment;
          blank(i);
        } else if (c == '/' && next == '*') {
          st = St::block_comment;
          blank(i);
          blank(++i);
        } else if (c == '"') {
          st = St::string;
          blank(i);
        } else if (c == '\'' &&
                   !(i > 0 && std::isxdigit(static_cast<unsigned char>(src[i - 1])) &&
                     i + 1 < n && std::isxdigit(static_cast<unsigned char>(next)))) {
          // A quote between two digits is a C++14 digit separator.
          st = St::chr;
          blank(i);
        }
        break;
      case St::line_comment:
        if (c == '\n')
          st = St::code;
        else
          blank(i);
        break;
      case St::block_comment:
        if (c == '*' && next == '/') {
          blank(i);
          blank(++i);
          st = St::code;
        } else {
          blank(i);
        }
        break;
      case St::string:
      case St::chr: {
        const char quote = st == St::string ? '"' : '\'';
        if (c == '\\' && i + 1 < n) {
          blank(i);
          blank(++i);
        } else if (c == quote) {
          blank(i);
          st = St::code;
        } else if (c == '\n') {
          st = St::code;  // unterminated literal; recover at end of line
        } else {
          blank(i);
        }
        break;
      }
      case St::preproc:
        if (c == '\\' && next == '\n') {
          blank(i);
          ++i;
        } else if (c == '\n') {
          st = St::code;
        } else {
          blank(i);
        }
        break;
    }
    if (src[i] == '\n')
      line_start = true;
    else if (!std::isspace(static_cast<unsigned char>(src[i])))
      line_start = false;
  }
  return out;
}

// ---- splitting -------------------------------------------------------------

namespace {

enum class BlockKind { function, scope, skip };

bool is_ident(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (is_ident(s[i])) {
      std::size_t j = i;
      while (j < s.size() && is_ident(s[j])) ++j;
      out.emplace_back(s.substr(i, j - i));
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

// Position after leading whitespace and access specifiers (`public:`).
std::size_t header_start(std::string_view masked, std::size_t begin, std::size_t end) {
  for (;;) {
    while (begin < end && std::isspace(static_cast<unsigned char>(masked[begin]))) ++begin;
    bool stripped = false;
    for (std::string_view spec : {"public", "private", "protected"}) {
      if (masked.substr(begin, spec.size()) != spec) continue;
      std::size_t j = begin + spec.size();
      while (j < end && std::isspace(static_cast<unsigned char>(masked[j]))) ++j;
      if (j < end && masked[j] == ':' && (j + 1 >= end || masked[j + 1] != ':')) {
        begin = j + 1;
        stripped = true;
      }
    }
    if (!stripped) return begin;
  }
}

// Index of the '(' opening the parameter list, or npos.
std::size_t parameter_list(std::string_view header) {
  static const std::set<std::string, std::less<>> kNotNames = {
      "__attribute__", "__attribute", "__declspec", "alignas", "__asm__"};
  int depth = 0;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const char c = header[i];
    if (c == '(') {
      if (depth == 0) {
        std::size_t j = i;
        while (j > 0 && std::isspace(static_cast<unsigned char>(header[j - 1]))) --j;
        std::size_t k = j;
        while (k > 0 && is_ident(header[k - 1])) --k;
        if (!kNotNames.count(header.substr(k, j - k))) return i;
      }
      ++depth;
    } else if (c == ')') {
      --depth;
    }
  }
  return std::string_view::npos;
}

BlockKind classify(std::string_view header) {
  const auto w = words(header);
  if (w.empty()) return BlockKind::skip;
  static const std::set<std::string, std::less<>> kControl = {
      "if", "for", "while", "switch", "do", "else", "return", "enum"};
  if (kControl.count(w[0])) return BlockKind::skip;
  const std::size_t paren = parameter_list(header);
  if (paren != std::string_view::npos) {
    // `x = {`, `x = f(...)` style initialisers are not definitions.
    int depth = 0;
    for (std::size_t i = 0; i < paren; ++i) {
      if (header[i] == '<') ++depth;
      if (header[i] == '>') --depth;
      if (header[i] == '=' && depth <= 0) {
        const auto before = header.substr(0, i);
        if (before.find("operator") == std::string_view::npos) return BlockKind::skip;
      }
    }
    return BlockKind::function;
  }
  if (header.find('=') != std::string_view::npos) return BlockKind::skip;
  for (const std::string &word : w)
    if (word == "namespace" || word == "extern" || word == "class" ||
        word == "struct" || word == "union")
      return BlockKind::scope;
  return BlockKind::skip;
}

std::string function_name(std::string_view header) {
  const std::size_t paren = parameter_list(header);
  if (paren == std::string_view::npos) return "<anonymous>";
  std::size_t j = paren;
  while (j > 0 && std::isspace(static_cast<unsigned char>(header[j - 1]))) --j;
  std::size_t k = j;
  while (k > 0 && (is_ident(header[k - 1]) || header[k - 1] == ':' || header[k - 1] == '~')) --k;
  std::string name(header.substr(k, j - k));
  while (!name.empty() && name.front() == ':') name.erase(0, 1);
  return name.empty() ? "<anonymous>" : name;
}

bool declaration_only(std::string_view text) {
  bool any = false;
  for (char c : text) {
    if (is_ident(c)) any = true;
    else if (!std::isspace(static_cast<unsigned char>(c)) && c != '*' && c != ',' &&
             c != '[' && c != ']')
      return false;
  }
  return any;
}

// K&R definition: `int f(a, b) int a; char *b; {`. `open` is the brace and
// the text since `floor` ends in parameter declarations. Returns the header
// start, or npos when the text is not of that shape.
std::size_t old_style_header(std::string_view masked, std::size_t floor, std::size_t open,
                             std::string_view &header) {
  std::size_t end = open;
  while (end > floor && std::isspace(static_cast<unsigned char>(masked[end - 1]))) --end;
  if (end == floor || masked[end - 1] != ';') return std::string_view::npos;
  --end;
  for (int guard = 0; guard < 64; ++guard) {
    const std::size_t semi = masked.rfind(';', end == 0 ? 0 : end - 1);
    const std::size_t start = (semi == std::string_view::npos || semi < floor) ? floor : semi + 1;
    const std::string_view piece = masked.substr(start, end - start);
    const std::size_t close = piece.rfind(')');
    if (close != std::string_view::npos) {
      if (!declaration_only(piece.substr(close + 1))) return std::string_view::npos;
      const std::size_t begin = header_start(masked, start, start + close + 1);
      header = masked.substr(begin, start + close + 1 - begin);
      return classify(header) == BlockKind::function ? begin : std::string_view::npos;
    }
    if (!declaration_only(piece) || start == floor) return std::string_view::npos;
    end = start - 1;
  }
  return std::string_view::npos;
}

// Index of the brace matching masked[open], or npos when unbalanced.
std::size_t matching_brace(std::string_view masked, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < masked.size(); ++i) {
    if (masked[i] == '{') ++depth;
    if (masked[i] == '}' && --depth == 0) return i;
  }
  return std::string_view::npos;
}

}  // namespace

std::vector<FunctionSpan> split_functions(std::string_view source) {
  const std::string masked = mask_source(source);
  const std::string_view m = masked;
  std::vector<FunctionSpan> out;
  std::size_t scopes = 0;
  std::size_t header_begin = 0;
  std::size_t floor = 0;  // just past the last brace seen at this level
  std::size_t i = 0;
  while (i < m.size()) {
    const char c = m[i];
    if (c == ';') {
      header_begin = i + 1;
    } else if (c == '}') {
      if (scopes > 0) --scopes;
      header_begin = floor = i + 1;
    } else if (c == '{') {
      std::size_t begin = header_start(m, header_begin, i);
      std::string_view header = m.substr(begin, i - begin);
      BlockKind kind = classify(header);
      if (kind == BlockKind::skip && begin == i) {
        const std::size_t kr = old_style_header(m, floor, i, header);
        if (kr != std::string_view::npos) {
          begin = kr;
          kind = BlockKind::function;
        }
      }
      if (kind == BlockKind::scope) {
        ++scopes;
        header_begin = floor = i + 1;
      } else {
        const std::size_t close = matching_brace(m, i);
        const std::size_t end = close == std::string_view::npos ? m.size() : close + 1;
        if (kind == BlockKind::function) {
          FunctionSpan span;
          span.name = function_name(header);
          span.begin = begin;
          span.end = end;
          span.line = 1 + static_cast<std::size_t>(
                              std::count(source.begin(), source.begin() + begin, '\n'));
          out.push_back(std::move(span));
        }
        header_begin = floor = end;
        i = end;
        continue;
      }
    }
    ++i;
  }
  return out;
}

// ---- files -----------------------------------------------------------------

std::vector<fs::path> collect_sources(const std::vector<fs::path> &inputs) {
  static const std::set<std::string, std::less<>> kExtensions = {
      ".c", ".h", ".cc", ".cpp", ".cxx", ".hpp", ".hh", ".hxx"};
  std::vector<fs::path> out;
  for (const fs::path &input : inputs) {
    std::error_code ec;
    if (fs::is_directory(input, ec)) {
      std::vector<fs::path> found;
      for (fs::recursive_directory_iterator it(input, ec), end; !ec && it != end;
           it.increment(ec))
        if (it->is_regular_file() && kExtensions.count(it->path().extension().string()))
          found.push_back(it->path());
      if (ec) throw InputError("cannot walk " + input.string() + ": " + ec.message());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(input, ec)) {
      out.push_back(input);
    } else {
      throw InputError("no such file or directory: " + input.string());
    }
  }
  return out;
}

// ---- report ----------------------------------------------------------------

std::size_t ScanReport::reported_count() const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [](const ScanEntry &e) { return e.reported; }));
}

std::size_t ScanReport::vulnerable_count() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const ScanEntry &e) {
        return e.prediction.verdict == Verdict::vulnerable;
      }));
}

json ScanReport::to_json() const {
  json j;
  j["schema_version"] = 1;
  j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  if (!timestamp.empty()) j["timestamp"] = timestamp;
  j["checkpoint"] = checkpoint.is_null() ? json::object() : checkpoint;
  j["config"] = {{"model", model_kind}, {"threshold", threshold}};
  j["summary"] = {{"files", files},
                  {"functions", entries.size()},
                  {"vulnerable", vulnerable_count()},
                  {"reported", reported_count()}};
  json rows = json::array();
  for (const ScanEntry &e : entries) {
    const VulnPrediction &p = e.prediction;
    rows.push_back({{"file", e.file},
                    {"function", e.function.name},
                    {"line", e.function.line},
                    {"byte_range", {e.function.begin, e.function.end}},
                    {"verdict", std::string(to_string(p.verdict))},
                    {"confidence", p.confidence()},
                    {"logits", {p.logits[0], p.logits[1]}},
                    {"reported", e.reported}});
  }
  j["entries"] = std::move(rows);
  return j;
}

ScanReport scan_files(const Classifier &model, const std::vector<fs::path> &files,
                      const ScanOptions &options) {
  if (!(options.threshold >= 0.0 && options.threshold <= 1.0))
    throw InputError("threshold must be in [0, 1]");
  std::vector<std::vector<ScanEntry>> per_file(files.size());
  std::vector<std::string> errors(files.size());

  auto scan_one = [&](std::size_t f) {
    std::ifstream in(files[f], std::ios::binary);
    if (!in) {
      errors[f] = "cannot read " + files[f].string();
      return;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    for (const FunctionSpan &span : split_functions(text)) {
      ScanEntry e;
      e.file = files[f].generic_string();
      e.function = span;
      e.prediction = model.predict(
          model.tokenize(std::string_view(text).substr(span.begin, span.end - span.begin)));
      e.prediction.sample_id =
          e.file + ":" + span.name + ":" + std::to_string(span.line);
      e.reported = e.prediction.verdict == Verdict::vulnerable &&
                   e.prediction.confidence() >= options.threshold;
      per_file[f].push_back(std::move(e));
    }
  };

  std::size_t threads = options.threads;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, files.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t f = next++; f < files.size(); f = next++) scan_one(f);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const std::string &e : errors)
    if (!e.empty()) throw InputError(e);

  ScanReport report;
  report.files = files.size();
  report.threshold = options.threshold;
  report.model_kind = model.kind();
  for (auto &entries : per_file)
    for (ScanEntry &e : entries) report.entries.push_back(std::move(e));
  return report;
}

std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace nullscan
