// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "lbound/model_ir.hpp"

namespace lbound {

enum class Library { cudnn, cublas, none };

inline const char* to_string(Library l) {
  switch (l) {
    case Library::cudnn: return "cudnn";
    case Library::cublas: return "cublas";
    case Library::none: return "none";
  }
  return "none";
}

// One row of the layer-type to library-API table.
struct ApiRow {
  std::string layer_type;
  std::string api_name;
  Library library;
  bool tensor_core_capable;
};

// The 13 library-backed layer types. Auxiliary setup calls
// (descriptor creation etc.) are not listed.
inline const std::vector<ApiRow>& api_table() {
  static const std::vector<ApiRow> rows = {
      {"Convolution", "cudnnConvolutionForward", Library::cudnn, true},
      {"Activation", "cudnnActivationForward", Library::cudnn, false},
      {"BatchNorm", "cudnnBatchNormalizationForwardInference", Library::cudnn, false},
      {"ConvBiasActivation", "cudnnConvolutionBiasActivationForward", Library::cudnn, true},
      {"RNN", "cudnnRNNForwardInference", Library::cudnn, true},
      {"Dropout", "cudnnDropoutForward", Library::cudnn, false},
      {"Pooling", "cudnnPoolingForward", Library::cudnn, false},
      {"Softmax", "cudnnSoftmaxForward", Library::cudnn, false},
      {"Add", "cudnnAddTensor", Library::cudnn, false},
      {"Elementwise", "cudnnOpTensor", Library::cudnn, false},
      {"Rescale", "cudnnScaleTensor", Library::cudnn, false},
      {"GEMM", "cublas*Gemm / cublasGemmEx", Library::cublas, true},
      {"GEMV", "cublasSgemv", Library::cublas, false},
  };
  return rows;
}

inline const ApiRow* api_row(std::string_view layer_type) {
  for (const auto& r : api_table())
    if (r.layer_type == layer_type) return &r;
  return nullptr;
}

// Row for an operator, or nullptr when no library call implements it.
inline const ApiRow* api_for(OpType op) {
  switch (op) {
    case OpType::Conv: return api_row("Convolution");
    case OpType::Relu:
    case OpType::Sigmoid:
    case OpType::Tanh: return api_row("Activation");
    case OpType::BatchNorm: return api_row("BatchNorm");
    case OpType::Dropout: return api_row("Dropout");
    case OpType::MaxPool:
    case OpType::AveragePool:
    case OpType::GlobalAveragePool: return api_row("Pooling");
    case OpType::Softmax: return api_row("Softmax");
    case OpType::Add: return api_row("Add");
    case OpType::Mul: return api_row("Elementwise");
    case OpType::Gemm:
    case OpType::MatMul: return api_row("GEMM");
    default: return nullptr;
  }
}

inline bool is_supported(OpType op) { return api_for(op) != nullptr; }

// Concrete entry point a benchmark for this row calls.
inline std::string concrete_api(const ApiRow& row, DType dt) {
  if (row.layer_type == "GEMM") return dt == DType::f16 ? "cublasGemmEx" : "cublasSgemm";
  return row.api_name;
}

struct LayerSignature {
  std::string op;  // OpType name; "Opaque:<onnx op>" for unsupported operators
  OpType op_type = OpType::Opaque;
  Attributes params;
  std::vector<TensorShape> in_shapes;
  DType dtype = DType::f32;
  std::string canonical_string;
  std::uint64_t hash64 = 0;

  bool operator==(const LayerSignature& o) const { return canonical_string == o.canonical_string; }
  bool operator<(const LayerSignature& o) const { return canonical_string < o.canonical_string; }

  LayerSignature with_dtype(DType dt) const;
};

namespace detail {

inline std::string escape_component(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|' || c == ',' || c == '=' || c == '[' || c == ']' || c == '%' || c == ' ' || c == ';') {
      char buf[4];
      std::snprintf(buf, sizeof(buf), "%%%02X", static_cast<unsigned char>(c));
      out += buf;
    } else {
      out += c;
    }
  }
  return out;
}

inline std::string unescape_component(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

// Floats carry a trailing marker-free shortest form; a float that happens to
// be integral keeps a ".0" so the type survives parsing.
inline std::string canonical_value(const AttrValue& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        auto fmt_float = [](double d) {
          auto s = format_double(d);
          if (s.find_first_of(".en") == std::string::npos) s += ".0";
          return s;
        };
        if constexpr (std::is_same_v<T, std::int64_t>) return std::to_string(x);
        else if constexpr (std::is_same_v<T, double>) return fmt_float(x);
        else if constexpr (std::is_same_v<T, IntList>) {
          std::string s = "[";
          for (std::size_t i = 0; i < x.size(); ++i) s += (i ? "," : "") + std::to_string(x[i]);
          return s + "]";
        } else if constexpr (std::is_same_v<T, FloatList>) {
          std::string s = "[";
          for (std::size_t i = 0; i < x.size(); ++i) s += (i ? "," : "") + fmt_float(x[i]);
          return s + "]";
        } else {
          return "\"" + escape_component(x) + "\"";
        }
      },
      v);
}

inline AttrValue parse_canonical_value(std::string_view s) {
  auto bad = [&]() -> AttrValue { throw Error(ErrorKind::format, "bad signature value '" + std::string(s) + "'"); };
  if (s.empty()) return bad();
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') return bad();
    return unescape_component(s.substr(1, s.size() - 2));
  }
  auto is_float = [](std::string_view t) { return t.find_first_of(".en") != std::string_view::npos; };
  if (s.front() == '[') {
    if (s.back() != ']') return bad();
    auto body = s.substr(1, s.size() - 2);
    if (body.empty()) return IntList{};
    auto parts = split(body, ',');
    if (is_float(body)) {
      FloatList fl;
      for (const auto& p : parts) {
        auto f = parse_double(p);
        if (!f) return bad();
        fl.push_back(*f);
      }
      return fl;
    }
    IntList il;
    for (const auto& p : parts) {
      auto i = parse_int(p);
      if (!i) return bad();
      il.push_back(*i);
    }
    return il;
  }
  if (is_float(s)) {
    auto f = parse_double(s);
    if (!f) return bad();
    return *f;
  }
  auto i = parse_int(s);
  if (!i) return bad();
  return *i;
}

inline std::string render_canonical(const std::string& op, DType dt, const std::vector<TensorShape>& in,
                                    const Attributes& params) {
  std::string s = op + "|" + to_string(dt) + "|in=";
  for (std::size_t i = 0; i < in.size(); ++i) s += (i ? "," : "") + in[i].to_string();
  s += "|";
  bool first = true;
  for (const auto& [k, v] : params) {  // std::map: keys already sorted
    s += (first ? "" : ",") + escape_component(k) + "=" + canonical_value(v);
    first = false;
  }
  return s;
}

// Splits on `sep` outside brackets and quotes.
inline std::vector<std::string> split_top(std::string_view s, char sep) {
  std::vector<std::string> out;
  int depth = 0;
  bool quoted = false;
  std::string cur;
  for (char c : s) {
    if (c == '"') quoted = !quoted;
    else if (!quoted && c == '[') ++depth;
    else if (!quoted && c == ']') --depth;
    if (c == sep && depth == 0 && !quoted) {
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

inline LayerSignature make_signature(std::string op, OpType op_type, Attributes params,
                                     std::vector<TensorShape> in_shapes, DType dt) {
  LayerSignature sig;
  sig.op = std::move(op);
  sig.op_type = op_type;
  sig.params = std::move(params);
  sig.dtype = dt;
  for (auto& s : in_shapes) s.dtype = dt;
  sig.in_shapes = std::move(in_shapes);
  sig.canonical_string = detail::render_canonical(sig.op, dt, sig.in_shapes, sig.params);
  sig.hash64 = fnv1a64(sig.canonical_string);
  return sig;
}

inline LayerSignature LayerSignature::with_dtype(DType dt) const {
  return make_signature(op, op_type, params, in_shapes, dt);
}

// Canonical identity of a layer; independent of node id, position and weights.
inline LayerSignature signature(const LayerNode& layer, DType dt) {
  if (!layer.shapes_inferred) throw Error(ErrorKind::state, "shapes not inferred for node '" + layer.id + "'");
  std::string op = layer.op_type == OpType::Opaque ? "Opaque:" + detail::escape_component(layer.onnx_op)
                                                   : to_string(layer.op_type);
  return make_signature(op, layer.op_type, layer.params, layer.in_shapes, dt);
}

// Inverse of the canonical rendering.
inline LayerSignature parse_signature(std::string_view canonical) {
  auto fields = detail::split_top(canonical, '|');
  if (fields.size() != 4 || !starts_with(fields[2], "in="))
    throw Error(ErrorKind::format, "malformed signature '" + std::string(canonical) + "'");
  OpType op_type = starts_with(fields[0], "Opaque:") ? OpType::Opaque : op_type_from_name(fields[0]);
  if (op_type == OpType::Opaque && !starts_with(fields[0], "Opaque"))
    throw Error(ErrorKind::format, "unknown operator in signature '" + fields[0] + "'");
  if (fields[1] != "f32" && fields[1] != "f16")
    throw Error(ErrorKind::format, "bad dtype '" + fields[1] + "' in signature");
  DType dt = parse_dtype(fields[1]);
  std::vector<TensorShape> shapes;
  auto in = std::string_view(fields[2]).substr(3);
  if (!in.empty()) {
    for (const auto& s : split(in, ',')) {
      TensorShape t{{}, dt};
      for (const auto& d : split(s, 'x')) {
        auto v = parse_int(d);
        if (!v || *v < 1) throw Error(ErrorKind::format, "bad shape '" + s + "' in signature");
        t.dims.push_back(*v);
      }
      shapes.push_back(std::move(t));
    }
  }
  Attributes params;
  if (!fields[3].empty()) {
    for (const auto& kv : detail::split_top(fields[3], ',')) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::format, "bad parameter '" + kv + "' in signature");
      params[detail::unescape_component(kv.substr(0, eq))] = detail::parse_canonical_value(kv.substr(eq + 1));
    }
  }
  auto sig = make_signature(fields[0], op_type, std::move(params), std::move(shapes), dt);
  if (sig.canonical_string != canonical)
    throw Error(ErrorKind::format, "signature '" + std::string(canonical) + "' is not in canonical form");
  return sig;
}

struct ModelDedupStats {
  std::string model;
  std::size_t total = 0;
  std::size_t unique = 0;
  double percent = 0;
};

struct UniqueLayers {
  std::vector<LayerSignature> signatures;  // sorted by canonical string
  std::vector<ModelDedupStats> per_model;
  ModelDedupStats pooled{"pooled", 0, 0, 0};
};

inline UniqueLayers unique_layers(const std::vector<ModelGraph>& models, DType dt) {
  UniqueLayers r;
  std::set<LayerSignature> all;
  for (const auto& m : models) {
    std::set<std::string> local;
    for (const auto& n : m.nodes()) {
      auto sig = signature(n, dt);
      local.insert(sig.canonical_string);
      all.insert(std::move(sig));
    }
    ModelDedupStats s{m.name(), m.size(), local.size(), 0};
    s.percent = s.total ? 100.0 * static_cast<double>(s.unique) / static_cast<double>(s.total) : 0.0;
    r.per_model.push_back(s);
    r.pooled.total += m.size();
  }
  r.pooled.unique = all.size();
  r.pooled.percent =
      r.pooled.total ? 100.0 * static_cast<double>(r.pooled.unique) / static_cast<double>(r.pooled.total) : 0.0;
  r.signatures.assign(all.begin(), all.end());
  return r;
}

// Line-delimited JSON, one record per model followed by the pooled record.
inline std::string dedup_stats_jsonl(const UniqueLayers& u) {
  std::string out;
  auto emit = [&](const ModelDedupStats& s) {
    nlohmann::ordered_json j;
    j["model"] = s.model;
    j["total"] = s.total;
    j["unique"] = s.unique;
    j["percent"] = s.percent;
    out += j.dump() + "\n";
  };
  for (const auto& s : u.per_model) emit(s);
  emit(u.pooled);
  return out;
}

struct OpCoverage {
  std::string op;  // ONNX operator name
  std::size_t count = 0;
  bool supported = false;
  double percent = 0;  // share of all layers in the model
};

struct SupportCoverage {
  std::size_t total = 0;
  std::size_t supported = 0;
  double percent = 0;
  std::vector<OpCoverage> breakdown;  // sorted by operator name
};

inline SupportCoverage support_coverage(const ModelGraph& g) {
  SupportCoverage c;
  std::map<std::string, OpCoverage> by_op;
  for (const auto& n : g.nodes()) {
    auto name = n.onnx_op.empty() ? std::string(to_string(n.op_type)) : n.onnx_op;
    auto& e = by_op[name];
    e.op = name;
    e.count++;
    e.supported = is_supported(n.op_type);
    c.total++;
    if (e.supported) c.supported++;
  }
  c.percent = c.total ? 100.0 * static_cast<double>(c.supported) / static_cast<double>(c.total) : 0.0;
  for (auto& [_, e] : by_op) {
    e.percent = 100.0 * static_cast<double>(e.count) / static_cast<double>(c.total);
    c.breakdown.push_back(e);
  }
  return c;
}

}  // namespace lbound
