#pragma once

// Flat key = value experiment configuration.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ftlab/error.hpp"

namespace ftlab::harness {

inline constexpr const char* kArtifactVersion = "1";

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Keys read through the typed getters are recorded with their default when
// missing, so the canonical form (and its hash) covers every parameter an
// experiment actually used.
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text, const std::string& origin = "<config>") {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        std::ostringstream os;
        os << origin << ":" << lineno << ": expected key = value";
        throw parse_error(os.str());
      }
      const std::string key = detail::trim(line.substr(0, eq));
      if (key.empty()) {
        std::ostringstream os;
        os << origin << ":" << lineno << ": empty key";
        throw parse_error(os.str());
      }
      cfg.values_[key] = detail::trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  // "key=value" override, as passed with --set.
  void apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw parse_error("override '" + kv + "' is not key=value");
    set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }

  void merge(const Config& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, double value) { values_[key] = detail::format_double(value); }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def) {
    auto it = values_.find(key);
    if (it == values_.end()) {
      values_[key] = def;
      return def;
    }
    return it->second;
  }

  double get_double(const std::string& key, double def) {
    if (!has(key)) {
      set(key, def);
      return def;
    }
    return to_double(key, values_.at(key));
  }

  long long get_int(const std::string& key, long long def) {
    if (!has(key)) {
      values_[key] = std::to_string(def);
      return def;
    }
    return to_int(key, values_.at(key));
  }

  bool get_bool(const std::string& key, bool def) {
    const std::string v = get_string(key, def ? "1" : "0");
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw parse_error("config key '" + key + "': expected a boolean, got '" + v + "'");
  }

  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& def) {
    if (!has(key)) {
      std::string joined;
      for (std::size_t i = 0; i < def.size(); ++i) joined += (i ? "," : "") + detail::format_double(def[i]);
      values_[key] = joined;
      return def;
    }
    std::vector<double> out;
    for (const auto& item : split(values_.at(key))) out.push_back(to_double(key, item));
    return out;
  }

  std::vector<long long> get_ints(const std::string& key, const std::vector<long long>& def) {
    if (!has(key)) {
      std::string joined;
      for (std::size_t i = 0; i < def.size(); ++i) joined += (i ? "," : "") + std::to_string(def[i]);
      values_[key] = joined;
      return def;
    }
    std::vector<long long> out;
    for (const auto& item : split(values_.at(key))) out.push_back(to_int(key, item));
    return out;
  }

  // Sorted "key=value" lines.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  // FNV-1a 64 over the canonical form, as 16 hex digits.
  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
      item = detail::trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  static double to_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw parse_error("config key '" + key + "': '" + v + "' is not a number");
    }
  }

  static long long to_int(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const long long i = std::stoll(v, &used);
      if (used == v.size()) return i;
      // allow 1e5 style
      const double d = std::stod(v, &used);
      if (used != v.size() || d != static_cast<double>(static_cast<long long>(d))) throw std::invalid_argument(v);
      return static_cast<long long>(d);
    } catch (const std::exception&) {
      throw parse_error("config key '" + key + "': '" + v + "' is not an integer");
    }
  }

  std::map<std::string, std::string> values_;
};

// Named overlays applied before the config file.
inline Config preset(const std::string& name) {
  if (name == "fig1") return Config::parse("d = 1000\nm = 50\ntop = 1.5\nbottom = 0.3\n", "preset fig1");
  if (name == "smoke") {
    return Config::parse(
        "n_grid = 10,50\nalphas = 1,5\ndepths = 1,2,10\nwidths = 100,1000\nd = 100\nm = 10\n"
        "iters = 300\nrepetitions = 2\nresamples = 3\n",
        "preset smoke");
  }
  throw invalid_argument("unknown preset '" + name + "' (known: fig1, smoke)");
}

}  // namespace ftlab::harness
