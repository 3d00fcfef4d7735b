#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <unordered_map>

#include "minos/report.hpp"

namespace minos::report {

namespace {

std::optional<double> as_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

void write_row(std::ostream& os, const std::vector<std::string>& row) {
  for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << quote(row[i]);
  os << '\n';
}

// Splits one record; quoted fields may span lines, pulled from `in`.
bool read_record(std::istream& in, std::vector<std::string>& out, size_t& line,
                 const std::string& source) {
  out.clear();
  std::string text;
  for (;;) {
    if (!std::getline(in, text)) return false;
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty() || text[0] == '#') continue;
    break;
  }
  const size_t start = line;
  std::string field;
  bool quoted = false;
  size_t i = 0;
  for (;;) {
    if (i == text.size()) {
      if (!quoted) break;
      std::string more;
      if (!std::getline(in, more)) throw ReportError(source, start, "unterminated quoted field");
      ++line;
      if (!more.empty() && more.back() == '\r') more.pop_back();
      field += '\n';
      text = std::move(more);
      i = 0;
      continue;
    }
    const char c = text[i++];
    if (quoted) {
      if (c != '"') {
        field += c;
      } else if (i < text.size() && text[i] == '"') {
        field += '"';
        ++i;
      } else {
        quoted = false;
        if (i < text.size() && text[i] != ',') {
          throw ReportError(source, line, "unexpected character after closing quote");
        }
      }
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == '"') {
      throw ReportError(source, line, "quote inside an unquoted field");
    } else {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return true;
}

}  // namespace

Table read_csv(std::istream& in, const std::string& source) {
  Table t;
  size_t line = 0;
  std::vector<std::string> rec;
  if (!read_record(in, t.header, line, source)) return t;
  for (const auto& h : t.header) {
    if (h.empty()) throw ReportError(source, line, "empty column name");
  }
  while (read_record(in, rec, line, source)) {
    if (rec.size() != t.header.size()) {
      throw ReportError(source, line,
                        "expected " + std::to_string(t.header.size()) + " fields, found " +
                            std::to_string(rec.size()));
    }
    t.rows.push_back(rec);
  }
  return t;
}

Table read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ReportError(path, 0, "cannot open file");
  return read_csv(in, path);
}

Table merge(const std::vector<Table>& tables) {
  Table out;
  std::unordered_map<std::string, size_t> index;
  for (const Table& t : tables) {
    for (const auto& h : t.header) {
      if (index.emplace(h, out.header.size()).second) out.header.push_back(h);
    }
  }
  for (const Table& t : tables) {
    for (const auto& row : t.rows) {
      std::vector<std::string> r(out.header.size());
      for (size_t i = 0; i < t.header.size(); ++i) r[index[t.header[i]]] = row[i];
      out.rows.push_back(std::move(r));
    }
  }
  return out;
}

void sort_rows(Table& table, const std::vector<std::string>& columns) {
  std::vector<size_t> keys;
  for (const auto& c : columns) {
    auto it = std::find(table.header.begin(), table.header.end(), c);
    if (it == table.header.end()) throw std::invalid_argument("no column named '" + c + "'");
    keys.push_back(static_cast<size_t>(it - table.header.begin()));
  }
  std::stable_sort(table.rows.begin(), table.rows.end(), [&](const auto& a, const auto& b) {
    for (size_t k : keys) {
      auto x = as_number(a[k]);
      auto y = as_number(b[k]);
      if (x && y) {
        if (*x != *y) return *x < *y;
      } else if (a[k] != b[k]) {
        return a[k] < b[k];
      }
    }
    return false;
  });
}

void write(std::ostream& os, const Table& table, bool annotate) {
  if (table.header.empty()) return;
  write_row(os, table.header);
  for (const auto& r : table.rows) write_row(os, r);
  if (!annotate || table.rows.empty()) return;
  for (size_t c = 0; c < table.header.size(); ++c) {
    std::vector<double> v;
    bool numeric = true;
    for (const auto& r : table.rows) {
      if (r[c].empty()) continue;
      auto x = as_number(r[c]);
      if (!x) {
        numeric = false;
        break;
      }
      v.push_back(*x);
    }
    if (!numeric || v.empty()) continue;
    std::sort(v.begin(), v.end());
    auto rank = [&](double p) {
      size_t k = static_cast<size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
      return v[std::clamp<size_t>(k, 1, v.size()) - 1];
    };
    os << "# " << table.header[c] << ": n=" << v.size() << " p50=" << rank(50)
       << " p99=" << rank(99) << " max=" << v.back() << '\n';
  }
}

}  // namespace minos::report
