#ifndef NFANNEAL_IO_HPP
#define NFANNEAL_IO_HPP

// Plain-text tables and the dataset file. Numbers are written with 17
// significant digits and parsed without locale dependence.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "nfanneal/errors.hpp"
#include "nfanneal/repressilator.hpp"

namespace nfanneal {

/// 17 significant digits, locale independent; parses back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse_number(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    // from_chars rejects the spellings to_chars emits for non-finite values
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    throw InputError("not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<double> parse_number_list(std::string_view s) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == ',' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != ',' && s[j] != '\t') ++j;
    if (j > i) out.push_back(parse_number(s.substr(i, j - i)));
    i = j;
  }
  return out;
}

inline std::string format_number_list(const double* v, std::size_t n, char sep = ' ') {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += sep;
    out += format_number(v[i]);
  }
  return out;
}

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.emplace_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

/// Comma-separated table writer with a fixed column set.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> columns)
      : path_(path), out_(path, std::ios::binary), columns_(std::move(columns)) {
    if (!out_) throw InputError("cannot open " + path.string() + " for writing");
    write_header();
  }

  /// Lines written before the header, each prefixed with '#'.
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& comments,
            std::vector<std::string> columns)
      : path_(path), out_(path, std::ios::binary), columns_(std::move(columns)) {
    if (!out_) throw InputError("cannot open " + path.string() + " for writing");
    for (const auto& c : comments) out_ << "# " << c << '\n';
    write_header();
  }

  std::size_t columns() const noexcept { return columns_.size(); }

  /// Fields must already be formatted; numbers via format_number.
  void row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_.size()) {
      throw InputError("row for " + path_.string() + " has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(columns_.size()));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << fields[i];
    out_ << '\n';
  }

  void numeric_row(const std::vector<double>& values) {
    std::vector<std::string> f;
    f.reserve(values.size());
    for (double v : values) f.push_back(format_number(v));
    row(f);
  }

  void flush() { out_.flush(); }

 private:
  void write_header() {
    for (std::size_t i = 0; i < columns_.size(); ++i) out_ << (i ? "," : "") << columns_[i];
    out_ << '\n';
  }

  std::filesystem::path path_;
  std::ofstream out_;
  std::vector<std::string> columns_;
};

/// A fully numeric table with '#'-prefixed metadata lines of the form
/// "key = value" before the header.
struct CsvTable {
  std::map<std::string, std::string> metadata;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    throw InputError("table has no column '" + name + "'");
  }

  bool has_column(const std::string& name) const {
    for (const auto& c : columns) {
      if (c == name) return true;
    }
    return false;
  }

  std::vector<double> values(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }
};

/// Strict reader: every data row must have exactly the header's field count
/// and every field must parse as a number.
inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("missing file: " + path.string());
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (header) throw InputError(path.string() + ":" + std::to_string(line_no) + ": comment after header");
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t#");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      t.metadata[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
      continue;
    }
    if (!header) {
      t.columns = split_fields(line);
      header = true;
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != t.columns.size()) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(t.columns.size()) + " fields, found " +
                       std::to_string(fields.size()));
    }
    std::vector<double> r;
    r.reserve(fields.size());
    try {
      for (const auto& f : fields) r.push_back(parse_number(f));
    } catch (const InputError& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    t.rows.push_back(std::move(r));
  }
  if (!header) throw InputError(path.string() + " has no header row");
  return t;
}

/// Dataset file: metadata lines (sigma2, optional theta_true and seed), then
/// the columns time,observed.
inline void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::vector<std::string> meta{"nfanneal dataset", "sigma2 = " + format_number(data.noise_variance)};
  if (data.theta_true) {
    meta.push_back("theta_true = " + format_number_list(data.theta_true->values.data(), 8));
  }
  if (data.seed) meta.push_back("seed = " + std::to_string(*data.seed));
  CsvWriter w(path, meta, {"time", "observed"});
  for (std::size_t i = 0; i < data.times.size(); ++i) w.numeric_row({data.times[i], data.observed[i]});
}

inline Dataset read_dataset(const std::filesystem::path& path) {
  const auto t = read_csv(path);
  if (t.columns != std::vector<std::string>{"time", "observed"}) {
    throw InputError(path.string() + ": dataset columns must be time,observed");
  }
  Dataset d;
  d.times = t.values("time");
  d.observed = t.values("observed");
  const auto s2 = t.metadata.find("sigma2");
  if (s2 == t.metadata.end()) throw InputError(path.string() + ": dataset metadata lacks sigma2");
  d.noise_variance = parse_number(s2->second);
  if (const auto th = t.metadata.find("theta_true"); th != t.metadata.end()) {
    d.theta_true = RepressilatorParams(parse_number_list(th->second));
  }
  if (const auto sd = t.metadata.find("seed"); sd != t.metadata.end()) {
    d.seed = static_cast<std::uint64_t>(std::stoull(sd->second));
  }
  d.validate();
  return d;
}

}  // namespace nfanneal

#endif  // NFANNEAL_IO_HPP
