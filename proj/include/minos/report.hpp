#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace minos::report {

/// A CSV table. Lines starting with '#' are comments and carry no data.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Malformed input; line() is the 1-based line of the offending record.
class ReportError : public std::runtime_error {
 public:
  ReportError(const std::string& source, size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
        source_(source),
        line_(line) {}
  const std::string& source() const { return source_; }
  size_t line() const { return line_; }

 private:
  std::string source_;
  size_t line_;
};

/// Parses RFC 4180 style CSV with a header row. Every record must have as
/// many fields as the header.
Table read_csv(std::istream& in, const std::string& source);
Table read_csv_file(const std::string& path);

/// Union of the inputs: columns in first-seen order, missing cells empty,
/// rows in input order.
Table merge(const std::vector<Table>& tables);

/// Stable sort on the given columns, numerically when both cells parse as
/// numbers. Unknown columns throw std::invalid_argument.
void sort_rows(Table& table, const std::vector<std::string>& columns);

/// Writes the table, then one '#' line per numeric column with its p50, p99
/// and max over the rows.
void write(std::ostream& os, const Table& table, bool annotate = true);

}  // namespace minos::report
