#pragma once

// Minimal CSV reading and writing for the long-format data files.
// UTF-8, comma separated, header row, '.' decimal separator. Lines starting
// with '#' are comments and are skipped on read.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ces_skill::csv {

struct Row {
  int line = 0;  // 1-based line number in the source
  std::vector<std::string> fields;
};

struct Table {
  std::string source;  // file name used in error messages
  std::vector<std::string> header;
  std::vector<Row> rows;

  // Column index of `name`; throws ParseError naming the file when absent.
  std::size_t column(std::string_view name) const;
};

Table read(std::istream& in, std::string source);
Table read_file(const std::filesystem::path& path);

// Checked field conversion; errors carry file/row/column.
double parse_double(const Table& t, const Row& row, std::size_t col);
int parse_int(const Table& t, const Row& row, std::size_t col);
const std::string& field(const Table& t, const Row& row, std::size_t col);

// Shortest representation that round-trips to the same double.
std::string format_double(double v);

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void comment(std::string_view text);
  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
};

}  // namespace ces_skill::csv
