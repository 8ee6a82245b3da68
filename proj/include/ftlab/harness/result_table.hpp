#pragma once

// Long-format result rows, CSV emission and the plot-ready aggregate.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "ftlab/error.hpp"
#include "ftlab/harness/config.hpp"
#include "ftlab/harness/stats.hpp"

namespace ftlab::harness {

struct ResultRow {
  std::string experiment;
  std::uint64_t seed = 0;
  long long n = 0;
  long long depth_or_width = 0;
  std::string variant;
  std::string metric;
  double value = 0.0;
};

inline auto row_key(const ResultRow& r) {
  return std::tie(r.experiment, r.variant, r.metric, r.n, r.depth_or_width, r.seed);
}

struct ResultTable {
  std::string experiment;
  std::map<std::string, std::string> metadata;  // config_hash, artifact_version, ...
  std::vector<ResultRow> rows;

  void add(std::uint64_t seed, long long n, long long depth_or_width, const std::string& variant,
           const std::string& metric, double value) {
    rows.push_back({experiment, seed, n, depth_or_width, variant, metric, value});
  }

  void sort() {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const ResultRow& a, const ResultRow& b) { return row_key(a) < row_key(b); });
  }

  // All values of one series, ordered by seed.
  std::vector<double> values(const std::string& variant, const std::string& metric, long long n,
                             long long depth_or_width) const {
    std::vector<std::pair<std::uint64_t, double>> hits;
    for (const auto& r : rows) {
      if (r.variant == variant && r.metric == metric && r.n == n && r.depth_or_width == depth_or_width) {
        hits.emplace_back(r.seed, r.value);
      }
    }
    std::sort(hits.begin(), hits.end());
    std::vector<double> out;
    for (const auto& h : hits) out.push_back(h.second);
    return out;
  }
};

inline constexpr const char* kCsvHeader = "experiment,seed,n,depth_or_width,variant,metric,value";

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline std::string to_csv(const ResultTable& t) {
  std::ostringstream os;
  for (const auto& [k, v] : t.metadata) os << "# " << k << ": " << v << "\n";
  os << kCsvHeader << "\n";
  for (const auto& r : t.rows) {
    os << detail::csv_field(r.experiment) << ',' << r.seed << ',' << r.n << ',' << r.depth_or_width << ','
       << detail::csv_field(r.variant) << ',' << detail::csv_field(r.metric) << ','
       << detail::format_double(r.value) << "\n";
  }
  return os.str();
}

inline ResultTable parse_csv(const std::string& text) {
  ResultTable t;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto colon = line.find(": ");
      if (colon != std::string::npos) t.metadata[line.substr(2, colon - 2)] = line.substr(colon + 2);
      continue;
    }
    if (!header_seen) {
      if (line != kCsvHeader) throw parse_error("csv: unexpected header '" + line + "'");
      header_seen = true;
      continue;
    }
    const auto f = detail::split_csv_line(line);
    if (f.size() != 7) {
      std::ostringstream os;
      os << "csv line " << lineno << ": expected 7 fields, got " << f.size();
      throw parse_error(os.str());
    }
    try {
      t.rows.push_back({f[0], std::stoull(f[1]), std::stoll(f[2]), std::stoll(f[3]), f[4], f[5], std::stod(f[6])});
    } catch (const std::exception&) {
      std::ostringstream os;
      os << "csv line " << lineno << ": malformed number";
      throw parse_error(os.str());
    }
    t.experiment = f[0];
  }
  if (!header_seen) throw parse_error("csv: missing header");
  return t;
}

struct AggregateRow {
  std::string experiment;
  long long n = 0;
  long long depth_or_width = 0;
  std::string variant;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  double median = 0.0;
  std::size_t count = 0;
};

// Mean/std/median over seeds for each (variant, metric, n, depth_or_width).
inline std::vector<AggregateRow> aggregate(const ResultTable& t) {
  std::map<std::tuple<std::string, std::string, std::string, long long, long long>, std::vector<double>> groups;
  for (const auto& r : t.rows) groups[{r.experiment, r.variant, r.metric, r.n, r.depth_or_width}].push_back(r.value);
  std::vector<AggregateRow> out;
  for (const auto& [key, vals] : groups) {
    const auto& [exp, variant, metric, n, dw] = key;
    out.push_back({exp, n, dw, variant, metric, mean(vals), stddev(vals), median(vals), vals.size()});
  }
  return out;
}

inline std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream os;
  os << "experiment,n,depth_or_width,variant,metric,mean,std,median,count\n";
  for (const auto& r : rows) {
    os << detail::csv_field(r.experiment) << ',' << r.n << ',' << r.depth_or_width << ','
       << detail::csv_field(r.variant) << ',' << detail::csv_field(r.metric) << ',' << detail::format_double(r.mean)
       << ',' << detail::format_double(r.std) << ',' << detail::format_double(r.median) << ',' << r.count << "\n";
  }
  return os.str();
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw io_error("write failed: " + path.string());
}

}  // namespace detail

struct EmittedFiles {
  std::filesystem::path csv;
  std::filesystem::path config;
  std::filesystem::path plot;
};

// <dir>/<experiment>.csv, <experiment>.config and <experiment>_plot.csv
inline EmittedFiles emit(const ResultTable& table, const Config& cfg, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create " + dir.string() + ": " + ec.message());
  EmittedFiles f{dir / (table.experiment + ".csv"), dir / (table.experiment + ".config"),
                 dir / (table.experiment + "_plot.csv")};
  detail::write_text(f.csv, to_csv(table));
  detail::write_text(f.config, cfg.canonical());
  detail::write_text(f.plot, aggregate_csv(aggregate(table)));
  return f;
}

}  // namespace ftlab::harness
