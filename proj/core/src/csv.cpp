#include "ces_skill/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "ces_skill/error.hpp"

namespace ces_skill::csv {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.emplace_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw ParseError(source, 1, 0, fmt::format("missing column '{}'", name));
}

Table read(std::istream& in, std::string source) {
  Table t;
  t.source = std::move(source);
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = trim(line);
    if (lineno == 1 && view.substr(0, 3) == "\xEF\xBB\xBF") view.remove_prefix(3);
    if (view.empty() || view.front() == '#') continue;
    if (!have_header) {
      t.header = split(view);
      have_header = true;
      continue;
    }
    Row row{lineno, split(view)};
    if (row.fields.size() != t.header.size()) {
      throw ParseError(t.source, lineno, 0,
                       fmt::format("expected {} fields, found {}", t.header.size(),
                                   row.fields.size()));
    }
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw ParseError(t.source, 0, 0, "file has no header row");
  return t;
}

Table read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
  return read(in, path.filename().string());
}

const std::string& field(const Table& t, const Row& row, std::size_t col) {
  if (col >= row.fields.size()) {
    throw ParseError(t.source, row.line, static_cast<int>(col) + 1, "missing field");
  }
  return row.fields[col];
}

double parse_double(const Table& t, const Row& row, std::size_t col) {
  const std::string& s = field(t, row, col);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError(t.source, row.line, static_cast<int>(col) + 1,
                     fmt::format("'{}' in column '{}' is not a number", s, t.header[col]));
  }
  return v;
}

int parse_int(const Table& t, const Row& row, std::size_t col) {
  const std::string& s = field(t, row, col);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError(t.source, row.line, static_cast<int>(col) + 1,
                     fmt::format("'{}' in column '{}' is not an integer", s, t.header[col]));
  }
  return v;
}

std::string format_double(double v) { return fmt::format("{}", v); }

void Writer::comment(std::string_view text) { out_ << "# " << text << '\n'; }

void Writer::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << fields[i];
  }
  out_ << '\n';
}

}  // namespace ces_skill::csv
