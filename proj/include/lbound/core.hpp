// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iterator>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace lbound {

// Error categories. The CLI maps them onto its exit-code contract.
enum class ErrorKind {
  parse,        // undecodable input bytes / text
  structure,    // graph is not a DAG, dangling edge, duplicate id
  inference,    // shape mismatch during inference
  state,        // operation called before a prerequisite (e.g. shapes missing)
  config,       // invalid configuration
  storage,      // database I/O
  miss,         // performance database lookup failure
  format,       // malformed profile / manifest / system-profile file
  correlation,  // profile cannot be aligned with the model
  domain,       // numeric argument outside its domain
  generation,   // benchmark source cannot be generated
  usage,        // command-line misuse
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::parse: return "parse error";
    case ErrorKind::structure: return "structure error";
    case ErrorKind::inference: return "inference error";
    case ErrorKind::state: return "state error";
    case ErrorKind::config: return "config error";
    case ErrorKind::storage: return "storage error";
    case ErrorKind::miss: return "miss error";
    case ErrorKind::format: return "format error";
    case ErrorKind::correlation: return "correlation error";
    case ErrorKind::domain: return "domain error";
    case ErrorKind::generation: return "generation error";
    case ErrorKind::usage: return "usage error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

enum class DType { f32, f16 };

inline const char* to_string(DType d) { return d == DType::f32 ? "f32" : "f16"; }

inline std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 2; }

inline DType parse_dtype(std::string_view s) {
  if (s == "f32" || s == "float32" || s == "float") return DType::f32;
  if (s == "f16" || s == "float16" || s == "half") return DType::f16;
  throw Error(ErrorKind::config, "unknown data type '" + std::string(s) + "'");
}

// Shortest decimal string that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Latencies are microseconds internally; human output is milliseconds, 3 decimals.
inline std::string format_ms(double us) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", us / 1000.0);
  return buf;
}

// FNV-1a, 64 bit. Stable across platforms.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

inline std::string utc_timestamp() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::parse, "cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace lbound
