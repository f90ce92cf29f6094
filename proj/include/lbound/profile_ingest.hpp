// SPDX-License-Identifier: Apache-2.0
#pragma once

// Execution profiles of a framework run: measured latency, the library API
// call log and the GPU kernel trace.
//
// Profile file (UTF-8, '\n' line endings, fields separated by one TAB):
//
//   LBOUND-PROFILE 1
//   [META]
//   model=<name>
//   system=<system id>
//   batch=<int>
//   measured_latency_ms=<real > 0>
//   [APICALLS]
//   <seq> TAB <api name> TAB <k=v;k=v;...> TAB <frame|frame|...>
//   [KERNELS]
//   <name> TAB <duration us> TAB <prev seq>,<next seq>
//
// Params, backtrace and correlation columns may be empty. Text fields are
// percent-encoded for '%', TAB, CR, LF, and additionally ';' '=' '|' ','
// where those act as separators; a kernel name's leading '[' is encoded too.
// [KERNELS] may be omitted entirely.
//
// Kernel correlation: prev == next means the kernel was launched by that
// call; prev < next means it ran between two calls (launched by something
// outside the logged libraries).

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lbound/bench_types.hpp"

namespace lbound {

struct ApiCall {
  std::int64_t seq = 0;
  std::string api_name;
  std::map<std::string, std::string> params;
  std::vector<std::string> backtrace;

  bool operator==(const ApiCall&) const = default;
};

struct KernelRecord {
  std::string name;
  double duration_us = 0;
  std::optional<std::pair<std::int64_t, std::int64_t>> seq_between;

  bool launched_by(std::int64_t seq) const { return seq_between && seq_between->first == seq && seq_between->second == seq; }
  bool between_calls() const { return seq_between && seq_between->first < seq_between->second; }
  bool operator==(const KernelRecord&) const = default;
};

struct ExecutionProfile {
  std::string model;
  std::string system_id;
  std::int64_t batch = 1;
  double measured_latency_ms = 0;
  std::vector<ApiCall> api_calls;
  std::vector<KernelRecord> kernels;
  bool has_kernels = true;  // false when the trace section was absent

  double measured_latency_us() const { return measured_latency_ms * 1000.0; }
  bool operator==(const ExecutionProfile&) const = default;
};

namespace detail {

inline std::string pct_encode(std::string_view s, std::string_view extra) {
  std::string out;
  for (char c : s) {
    if (c == '%' || c == '\t' || c == '\n' || c == '\r' || extra.find(c) != std::string_view::npos) {
      char buf[4];
      std::snprintf(buf, sizeof(buf), "%%%02X", static_cast<unsigned char>(c));
      out += buf;
    } else {
      out += c;
    }
  }
  return out;
}

inline std::string pct_decode(std::string_view s, const std::string& where) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '%') {
      out += s[i];
      continue;
    }
    if (i + 2 >= s.size() || !std::isxdigit(static_cast<unsigned char>(s[i + 1])) ||
        !std::isxdigit(static_cast<unsigned char>(s[i + 2])))
      throw Error(ErrorKind::format, where + ": bad percent escape");
    out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
    i += 2;
  }
  return out;
}

}  // namespace detail

inline std::string serialize_profile(const ExecutionProfile& p) {
  using detail::pct_encode;
  std::ostringstream o;
  o << "LBOUND-PROFILE 1\n[META]\n";
  o << "model=" << pct_encode(p.model, "") << "\n";
  o << "system=" << pct_encode(p.system_id, "") << "\n";
  o << "batch=" << p.batch << "\n";
  o << "measured_latency_ms=" << format_double(p.measured_latency_ms) << "\n";
  o << "[APICALLS]\n";
  for (const auto& c : p.api_calls) {
    o << c.seq << "\t" << pct_encode(c.api_name, "") << "\t";
    bool first = true;
    for (const auto& [k, v] : c.params) {
      o << (first ? "" : ";") << pct_encode(k, ";=") << "=" << pct_encode(v, ";=");
      first = false;
    }
    o << "\t";
    for (std::size_t i = 0; i < c.backtrace.size(); ++i) o << (i ? "|" : "") << pct_encode(c.backtrace[i], "|");
    o << "\n";
  }
  if (p.has_kernels) {
    o << "[KERNELS]\n";
    for (const auto& k : p.kernels) {
      auto name = pct_encode(k.name, "");
      if (!name.empty() && name.front() == '[') name.replace(0, 1, "%5B");  // not a section header
      o << name << "\t" << format_double(k.duration_us) << "\t";
      if (k.seq_between) o << k.seq_between->first << "," << k.seq_between->second;
      o << "\n";
    }
  }
  return o.str();
}

inline ExecutionProfile parse_profile(std::string_view text) {
  ExecutionProfile p;
  p.has_kernels = false;
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  std::size_t lineno = 0;
  auto where = [&] { return "profile line " + std::to_string(lineno); };
  auto fail = [&](const std::string& m) { throw Error(ErrorKind::format, where() + ": " + m); };
  if (lines.empty() || trim(lines[0]) != "LBOUND-PROFILE 1") {
    lineno = 1;
    fail("missing 'LBOUND-PROFILE 1' header");
  }
  enum class Sec { none, meta, calls, kernels } sec = Sec::none;
  std::set<std::string> seen_sections, meta_keys;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    lineno = i + 1;
    std::string line = lines[i];
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line == "[META]") sec = Sec::meta;
      else if (line == "[APICALLS]") sec = Sec::calls;
      else if (line == "[KERNELS]") sec = Sec::kernels;
      else fail("unknown section " + line);
      if (!seen_sections.insert(line).second) fail("duplicate section " + line);
      if (sec == Sec::kernels) p.has_kernels = true;
      continue;
    }
    switch (sec) {
      case Sec::none: fail("content before the first section"); break;
      case Sec::meta: {
        auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected key=value");
        auto key = line.substr(0, eq);
        auto val = detail::pct_decode(std::string_view(line).substr(eq + 1), where());
        if (!meta_keys.insert(key).second) fail("duplicate key '" + key + "'");
        if (key == "model") p.model = val;
        else if (key == "system") p.system_id = val;
        else if (key == "batch") {
          auto b = parse_int(val);
          if (!b || *b < 1) fail("batch must be a positive integer");
          p.batch = *b;
        } else if (key == "measured_latency_ms") {
          auto v = parse_double(val);
          if (!v || !(*v > 0)) fail("measured_latency_ms must be positive");
          p.measured_latency_ms = *v;
        } else {
          fail("unknown META key '" + key + "'");
        }
        break;
      }
      case Sec::calls: {
        auto cols = split(line, '\t');
        if (cols.size() < 2 || cols.size() > 4) fail("expected seq, api, params, backtrace columns");
        ApiCall c;
        auto seq = parse_int(cols[0]);
        if (!seq) fail("bad seq '" + cols[0] + "'");
        c.seq = *seq;
        if (!p.api_calls.empty() && c.seq <= p.api_calls.back().seq)
          fail("seq " + std::to_string(c.seq) + " does not increase");
        c.api_name = detail::pct_decode(cols[1], where());
        if (c.api_name.empty()) fail("empty api name");
        if (cols.size() > 2 && !cols[2].empty())
          for (const auto& kv : split(cols[2], ';')) {
            auto eq = kv.find('=');
            if (eq == std::string::npos) fail("bad param '" + kv + "'");
            c.params[detail::pct_decode(std::string_view(kv).substr(0, eq), where())] =
                detail::pct_decode(std::string_view(kv).substr(eq + 1), where());
          }
        if (cols.size() > 3 && !cols[3].empty())
          for (const auto& f : split(cols[3], '|')) c.backtrace.push_back(detail::pct_decode(f, where()));
        p.api_calls.push_back(std::move(c));
        break;
      }
      case Sec::kernels: {
        auto cols = split(line, '\t');
        if (cols.size() < 2 || cols.size() > 3) fail("expected name, duration, correlation columns");
        KernelRecord k;
        k.name = detail::pct_decode(cols[0], where());
        auto d = parse_double(cols[1]);
        if (!d || !(*d > 0)) fail("kernel duration must be positive");
        k.duration_us = *d;
        if (cols.size() == 3 && !cols[2].empty()) {
          auto pn = split(cols[2], ',');
          auto a = pn.size() == 2 ? parse_int(pn[0]) : std::nullopt;
          auto b = pn.size() == 2 ? parse_int(pn[1]) : std::nullopt;
          if (!a || !b || *a > *b) fail("bad correlation '" + cols[2] + "'");
          k.seq_between = std::make_pair(*a, *b);
        }
        p.kernels.push_back(std::move(k));
        break;
      }
    }
  }
  for (const char* s : {"[META]", "[APICALLS]"})
    if (!seen_sections.count(s)) throw Error(ErrorKind::format, std::string("profile is missing section ") + s);
  for (const char* k : {"model", "system", "batch", "measured_latency_ms"})
    if (!meta_keys.count(k)) throw Error(ErrorKind::format, std::string("profile [META] is missing '") + k + "'");
  return p;
}

inline ExecutionProfile load_profile(const std::string& path) { return parse_profile(read_file(path)); }

// ---------------------------------------------------------------------------
// Tensor Core kernel names: an underscore, then one of i/s/h, then at least
// one decimal digit, anywhere in the name (e.g. "volta_h884cudnn_...").

inline bool detect_tensorcore(std::string_view name) {
  for (std::size_t i = 0; i + 2 < name.size(); ++i)
    if (name[i] == '_' && (name[i + 1] == 'i' || name[i + 1] == 's' || name[i + 1] == 'h') &&
        name[i + 2] >= '0' && name[i + 2] <= '9')
      return true;
  return false;
}

// ---------------------------------------------------------------------------
// cuDNN / cuBLAS API logger output.
//
//   I! CuDNN (v7605) function cudnnConvolutionForward() called:
//   i!     xDesc: type=cudnnTensorDescriptor_t:
//   i!         dimA: type=int; val=[1,3,224,224];
//   i!     algo: type=cudnnConvolutionFwdAlgo_t; val=CUDNN_CONVOLUTION_FWD_ALGO_WINOGRAD (6);
//   i! Time: 2019-10-01T10:00:00.000000 (0d+0h+0m+1s since start)
//
// Nested descriptor fields flatten to "xDesc.dimA". Enumerant suffixes like
// " (6)" are dropped. Lines "Time:", "Process=" etc. at the shallowest indent
// are ignored.

struct CudnnLogResult {
  std::vector<ApiCall> calls;
  std::vector<std::string> warnings;
};

namespace detail {

struct LogBlock {
  std::string api;
  std::size_t first_line = 0;
  std::vector<std::pair<std::size_t, std::string>> body;  // (line number, text after "i!")
};

inline std::optional<std::string> parse_block_header(std::string_view line) {
  std::string_view rest;
  if (starts_with(line, "I! CuDNN (v")) rest = line.substr(11);
  else if (starts_with(line, "I! cuBLAS (v")) rest = line.substr(12);
  else return std::nullopt;
  std::size_t i = 0;
  while (i < rest.size() && std::isdigit(static_cast<unsigned char>(rest[i]))) ++i;
  if (i == 0) return std::string();
  rest.remove_prefix(i);
  if (!starts_with(rest, ") function ")) return std::string();
  rest.remove_prefix(11);
  auto paren = rest.find("()");
  if (paren == std::string_view::npos || paren == 0) return std::string();
  auto name = rest.substr(0, paren);
  for (char c : name)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return std::string();
  if (trim(rest.substr(paren + 2)) != "called:") return std::string();
  return std::string(name);
}

inline std::string strip_enumerant(std::string v) {
  auto t = std::string(trim(v));
  if (t.size() > 3 && t.back() == ')') {
    auto open = t.rfind(" (");
    if (open != std::string::npos) {
      auto inner = std::string_view(t).substr(open + 2, t.size() - open - 3);
      if (!inner.empty() && parse_int(inner)) return t.substr(0, open);
    }
  }
  return t;
}

// Returns flattened key -> value, or an error message.
inline std::variant<std::map<std::string, std::string>, std::string> parse_block_body(const LogBlock& b) {
  std::map<std::string, std::string> kv;
  std::vector<std::pair<std::size_t, std::string>> stack;  // (indent, key)
  std::optional<std::size_t> base;
  for (const auto& [lineno, text] : b.body) {
    std::size_t indent = 0;
    while (indent < text.size() && text[indent] == ' ') ++indent;
    auto content = std::string_view(text).substr(indent);
    if (content.empty()) continue;
    auto colon = content.find(": type=");
    if (colon == std::string_view::npos) {
      if (!base || indent < *base) continue;  // Time:/Process= trailer lines
      return "line " + std::to_string(lineno) + ": expected 'key: type=...'";
    }
    auto key = std::string(content.substr(0, colon));
    for (char c : key)
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '[' && c != ']')
        return "line " + std::to_string(lineno) + ": bad key '" + key + "'";
    if (!base) base = indent;
    if (indent < *base) return "line " + std::to_string(lineno) + ": indentation below the first field";
    while (!stack.empty() && stack.back().first >= indent) stack.pop_back();
    std::string full;
    for (const auto& s : stack) full += s.second + ".";
    full += key;
    auto rest = content.substr(colon + 2);  // "type=..."
    auto val_pos = rest.find("; val=");
    if (val_pos != std::string_view::npos) {
      auto v = rest.substr(val_pos + 6);
      auto end = v.find(';');
      if (end == std::string_view::npos) return "line " + std::to_string(lineno) + ": unterminated val";
      kv[full] = strip_enumerant(std::string(v.substr(0, end)));
    } else if (!rest.empty() && rest.back() == ':') {
      stack.emplace_back(indent, key);
    } else {
      kv[full] = "";
    }
  }
  return kv;
}

inline std::string int_list(const std::string& v) {
  std::string out;
  for (char c : v)
    if (c != ' ') out += c;
  return out;
}

// Keeps the fields the analyses compare, under short names:
// x/w/y shapes, pads, strides, dilations, group, algo, dtype.
inline std::map<std::string, std::string> canonical_params(const std::map<std::string, std::string>& raw) {
  std::map<std::string, std::string> p;
  auto take = [&](const char* from, const char* to) {
    if (auto it = raw.find(from); it != raw.end()) p[to] = int_list(it->second);
  };
  take("xDesc.dimA", "x");
  take("wDesc.dimA", "w");
  take("yDesc.dimA", "y");
  take("convDesc.padA", "pads");
  take("convDesc.strideA", "strides");
  take("convDesc.dilationA", "dilations");
  take("convDesc.groupCount", "group");
  take("transa", "transa");
  take("transb", "transb");
  take("m", "m");
  take("n", "n");
  take("k", "k");
  if (auto it = raw.find("xDesc.dataType"); it != raw.end())
    p["dtype"] = it->second == "CUDNN_DATA_HALF" ? "f16" : it->second == "CUDNN_DATA_FLOAT" ? "f32" : it->second;
  if (auto it = raw.find("algo"); it != raw.end()) {
    auto a = algorithm_from_cudnn_token(it->second);
    p["algo"] = a ? to_string(*a) : it->second;
  }
  return p;
}

}  // namespace detail

inline CudnnLogResult parse_cudnn_log_detailed(std::string_view text, bool strict = false) {
  CudnnLogResult out;
  std::vector<detail::LogBlock> blocks;
  std::optional<detail::LogBlock> cur;
  bool broken_header = false;
  std::size_t lineno = 0;
  auto report = [&](const std::string& m) {
    if (strict) throw Error(ErrorKind::parse, "cuDNN log " + m);
    out.warnings.push_back(m);
  };
  auto flush = [&] {
    if (cur) blocks.push_back(std::move(*cur));
    cur.reset();
  };
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (starts_with(line, "I! ")) {
      flush();
      auto name = detail::parse_block_header(line);
      broken_header = !name || name->empty();
      if (broken_header) {
        report("line " + std::to_string(lineno) + ": unparseable block header, block skipped");
        continue;
      }
      cur = detail::LogBlock{*name, lineno, {}};
    } else if (starts_with(line, "i!")) {
      if (cur) cur->body.emplace_back(lineno, std::string(line.substr(2)));
      else if (!broken_header) report("line " + std::to_string(lineno) + ": field outside a block, ignored");
    } else {
      flush();
      broken_header = false;
    }
  }
  flush();
  std::int64_t seq = 0;
  for (const auto& b : blocks) {
    auto body = detail::parse_block_body(b);
    if (auto err = std::get_if<std::string>(&body)) {
      report("block '" + b.api + "' at line " + std::to_string(b.first_line) + ": " + *err + ", block skipped");
      continue;
    }
    out.calls.push_back({++seq, b.api, detail::canonical_params(std::get<0>(body)), {}});
  }
  return out;
}

inline std::vector<ApiCall> parse_cudnn_log(std::string_view text, bool strict = false) {
  return parse_cudnn_log_detailed(text, strict).calls;
}

// Kernel trace lines use the [KERNELS] grammar: name TAB duration TAB prev,next.
inline std::vector<KernelRecord> parse_kernel_trace(std::string_view text) {
  auto wrapped = "LBOUND-PROFILE 1\n[META]\nmodel=x\nsystem=x\nbatch=1\nmeasured_latency_ms=1\n[APICALLS]\n[KERNELS]\n" +
                 std::string(text);
  return parse_profile(wrapped).kernels;
}

struct ConvertInputs {
  std::string cudnn_log;
  std::optional<std::string> kernel_trace;
  std::string model;
  std::string system_id;
  std::int64_t batch = 1;
  double measured_latency_ms = 0;
  bool strict = false;
};

inline ExecutionProfile convert_profile(const ConvertInputs& in, std::vector<std::string>* warnings = nullptr) {
  if (!(in.measured_latency_ms > 0)) throw Error(ErrorKind::config, "measured latency must be positive");
  if (in.batch < 1) throw Error(ErrorKind::config, "batch must be positive");
  ExecutionProfile p;
  p.model = in.model;
  p.system_id = in.system_id;
  p.batch = in.batch;
  p.measured_latency_ms = in.measured_latency_ms;
  auto log = parse_cudnn_log_detailed(in.cudnn_log, in.strict);
  if (warnings) *warnings = log.warnings;
  p.api_calls = std::move(log.calls);
  p.has_kernels = in.kernel_trace.has_value();
  if (in.kernel_trace) p.kernels = parse_kernel_trace(*in.kernel_trace);
  return p;
}

}  // namespace lbound
