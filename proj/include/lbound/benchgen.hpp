// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "lbound/bench_types.hpp"
#include "lbound/dedup.hpp"
#include "lbound/perfdb.hpp"

namespace lbound {

// ---------------------------------------------------------------------------
// Fusion patterns

// Pattern tokens: "Conv", "Bias" (an Add whose other operand is a constant),
// "Activation" (Relu/Sigmoid/Tanh), or any operator name.
struct FusionPattern {
  std::string id;
  std::vector<std::string> ops;
  std::string api_name;
  std::string min_library_version;
};

class FusionRegistry {
 public:
  // Patterns are tried longest first.
  static FusionRegistry builtin() {
    FusionRegistry r;
    r.add({"conv_bias_act", {"Conv", "Bias", "Activation"}, "cudnnConvolutionBiasActivationForward", "7.0"});
    // Identity activation through the fused API; earlier cuDNN versions run
    // the pair as cudnnConvolutionForward + cudnnAddTensor, which is exactly
    // the two unfused benchmarks.
    r.add({"conv_bias", {"Conv", "Bias"}, "cudnnConvolutionBiasActivationForward", "7.1"});
    return r;
  }

  void add(FusionPattern p) {
    if (p.ops.empty()) throw Error(ErrorKind::config, "fusion pattern '" + p.id + "' has no ops");
    for (const auto& q : patterns_)
      if (q.id == p.id) throw Error(ErrorKind::config, "duplicate fusion pattern '" + p.id + "'");
    patterns_.push_back(std::move(p));
    std::stable_sort(patterns_.begin(), patterns_.end(),
                     [](const FusionPattern& a, const FusionPattern& b) { return a.ops.size() > b.ops.size(); });
  }

  const std::vector<FusionPattern>& patterns() const { return patterns_; }

  const FusionPattern* find(std::string_view id) const {
    for (const auto& p : patterns_)
      if (p.id == id) return &p;
    return nullptr;
  }

 private:
  std::vector<FusionPattern> patterns_;
};

// One matched occurrence of a pattern in a graph.
struct FusionSite {
  std::string pattern_id;
  std::string fused_key;              // pattern id, plus ":<Activation>" when one is fused
  std::vector<std::size_t> members;   // node indices, head first
};

inline bool is_bias_add(const ModelGraph& g, const LayerNode& n, std::size_t producer) {
  if (n.op_type != OpType::Add || n.inputs.size() != 2) return false;
  int from_producer = 0, constant = 0;
  for (const auto& in : n.inputs) {
    if (in.kind == SourceKind::initializer) ++constant;
    else if (in.kind == SourceKind::node && in.source == g.nodes()[producer].id && in.output_index == 0) ++from_producer;
  }
  return from_producer == 1 && constant == 1;
}

namespace detail {

inline bool token_matches(const ModelGraph& g, std::string_view token, std::size_t node, std::size_t prev) {
  const auto& n = g.nodes()[node];
  if (token == "Bias") return is_bias_add(g, n, prev);
  if (token == "Activation") return is_activation(n.op_type);
  return n.op_type == op_type_from_name(token) && n.op_type != OpType::Opaque;
}

inline bool is_graph_output(const ModelGraph& g, const std::string& id) {
  const auto& outs = g.graph_outputs();
  return std::find(outs.begin(), outs.end(), id) != outs.end();
}

}  // namespace detail

// Scans topological order for registered patterns. Members other than the last
// must feed exactly one consumer (the next member). Sites never overlap.
inline std::vector<FusionSite> find_fusion_sites(const ModelGraph& g,
                                                 const FusionRegistry& reg = FusionRegistry::builtin()) {
  std::vector<FusionSite> sites;
  std::vector<bool> taken(g.size(), false);
  for (auto head : topo_indices(g)) {
    if (taken[head]) continue;
    for (const auto& p : reg.patterns()) {
      if (!detail::token_matches(g, p.ops[0], head, head) || p.ops[0] == "Bias") continue;
      std::vector<std::size_t> members{head};
      bool ok = true;
      for (std::size_t t = 1; t < p.ops.size() && ok; ++t) {
        auto cur = members.back();
        const auto& succ = g.succs(cur);
        if (succ.size() != 1 || detail::is_graph_output(g, g.nodes()[cur].id) || taken[succ[0]]) {
          ok = false;
          break;
        }
        // The consumer must read nothing else from the chain besides `cur`.
        if (!detail::token_matches(g, p.ops[t], succ[0], cur)) ok = false;
        else members.push_back(succ[0]);
      }
      if (!ok) continue;
      FusionSite s{p.id, p.id, members};
      if (p.ops.back() == "Activation") s.fused_key += std::string(":") + to_string(g.nodes()[members.back()].op_type);
      for (auto m : members) taken[m] = true;
      sites.push_back(std::move(s));
      break;
    }
  }
  return sites;
}

// A fusable (head signature, fused key) pair, the unit the generator expands.
struct FusionCandidate {
  LayerSignature head;
  std::string fused_key;

  bool operator<(const FusionCandidate& o) const {
    return std::tie(head.canonical_string, fused_key) < std::tie(o.head.canonical_string, o.fused_key);
  }
  bool operator==(const FusionCandidate& o) const {
    return head.canonical_string == o.head.canonical_string && fused_key == o.fused_key;
  }
};

inline std::vector<FusionCandidate> fusion_candidates(const std::vector<ModelGraph>& models, DType dt,
                                                      const FusionRegistry& reg = FusionRegistry::builtin()) {
  std::set<FusionCandidate> out;
  for (const auto& m : models)
    for (const auto& s : find_fusion_sites(m, reg)) out.insert({signature(m.nodes()[s.members[0]], dt), s.fused_key});
  return {out.begin(), out.end()};
}

inline std::string fused_pattern_id(const std::string& fused_key) { return fused_key.substr(0, fused_key.find(':')); }

// ---------------------------------------------------------------------------
// Benchmark specifications

struct BenchmarkSpec {
  LayerSignature signature;
  std::optional<ConvAlgorithm> algorithm;
  DType dtype = DType::f32;
  Layout layout = Layout::NCHW;
  std::optional<std::string> fused;
  std::string api_name;

  PerfKey key(const std::string& system) const { return make_key(system, signature, algorithm, layout, fused); }

  bool operator==(const BenchmarkSpec& o) const {
    return signature.canonical_string == o.signature.canonical_string && algorithm == o.algorithm &&
           dtype == o.dtype && layout == o.layout && fused == o.fused && api_name == o.api_name;
  }
};

struct GenerateConfig {
  std::vector<DType> dtypes{DType::f32, DType::f16};
  std::vector<Layout> layouts{Layout::NCHW};
  bool enable_fusion = false;
  std::vector<ConvAlgorithm> algorithms{kAllConvAlgorithms.begin(), kAllConvAlgorithms.end()};
};

namespace detail {

inline std::vector<Layout> conv_layouts(const GenerateConfig& c, DType) { return c.layouts; }

}  // namespace detail

// Expands unique layers into runnable benchmark specs. Output order: each
// signature in input order, dtype-major then layout then algorithm; fused
// specs follow, in candidate order.
inline std::vector<BenchmarkSpec> generate_specs(const std::vector<LayerSignature>& uniques,
                                                 const std::vector<FusionCandidate>& fusion,
                                                 const GenerateConfig& config,
                                                 const FusionRegistry& reg = FusionRegistry::builtin()) {
  if (config.dtypes.empty()) throw Error(ErrorKind::config, "no data types configured");
  if (config.layouts.empty()) throw Error(ErrorKind::config, "no layouts configured");
  if (config.algorithms.empty()) throw Error(ErrorKind::config, "no convolution algorithms configured");
  if (uniques.empty()) throw Error(ErrorKind::config, "no layers to benchmark");
  std::vector<BenchmarkSpec> specs;
  for (const auto& sig : uniques) {
    const auto* row = api_for(sig.op_type);
    if (!row) continue;
    for (auto dt : config.dtypes) {
      auto typed = sig.with_dtype(dt);
      auto api = concrete_api(*row, dt);
      if (sig.op_type == OpType::Conv) {
        for (auto layout : detail::conv_layouts(config, dt))
          for (auto algo : config.algorithms) specs.push_back({typed, algo, dt, layout, std::nullopt, api});
      } else {
        specs.push_back({typed, std::nullopt, dt, Layout::NCHW, std::nullopt, api});
      }
    }
  }
  if (config.enable_fusion) {
    for (const auto& fc : fusion) {
      const auto* p = reg.find(fused_pattern_id(fc.fused_key));
      if (!p) throw Error(ErrorKind::config, "unregistered fusion pattern '" + fc.fused_key + "'");
      // The fused API's activation path only runs the precomputed implicit GEMM.
      for (auto dt : config.dtypes)
        for (auto layout : detail::conv_layouts(config, dt))
          specs.push_back({fc.head.with_dtype(dt), ConvAlgorithm::IPGEMM, dt, layout, fc.fused_key, p->api_name});
    }
  }
  return specs;
}

inline std::vector<BenchmarkSpec> generate_specs(const std::vector<LayerSignature>& uniques,
                                                 const GenerateConfig& config = {}) {
  return generate_specs(uniques, {}, config);
}

// Specs whose exact key has no record for `system`; order preserved.
inline std::vector<BenchmarkSpec> delta_specs(const std::vector<BenchmarkSpec>& specs, const PerfDb& db,
                                              const std::string& system) {
  std::vector<BenchmarkSpec> out;
  for (const auto& s : specs)
    if (!db.contains(s.key(system))) out.push_back(s);
  return out;
}

// ---------------------------------------------------------------------------
// Manifest: one JSON object per line, fields in this order:
// signature_string, api, algorithm (null when n/a), dtype, layout,
// fused_pattern (null when unfused).

inline std::string manifest_line(const BenchmarkSpec& s) {
  nlohmann::ordered_json j;
  j["signature_string"] = s.signature.canonical_string;
  j["api"] = s.api_name;
  j["algorithm"] = s.algorithm ? nlohmann::ordered_json(to_string(*s.algorithm)) : nlohmann::ordered_json();
  j["dtype"] = to_string(s.dtype);
  j["layout"] = to_string(s.layout);
  j["fused_pattern"] = s.fused ? nlohmann::ordered_json(*s.fused) : nlohmann::ordered_json();
  return j.dump();
}

inline std::string write_manifest(const std::vector<BenchmarkSpec>& specs) {
  std::string out;
  for (const auto& s : specs) out += manifest_line(s) + "\n";
  return out;
}

inline BenchmarkSpec parse_manifest_line(std::string_view line) {
  try {
    auto j = nlohmann::json::parse(line);
    BenchmarkSpec s;
    s.signature = parse_signature(j.at("signature_string").get<std::string>());
    s.api_name = j.at("api").get<std::string>();
    if (!j.at("algorithm").is_null()) {
      auto a = parse_algorithm(j.at("algorithm").get<std::string>());
      if (!a) throw Error(ErrorKind::format, "unknown algorithm in manifest");
      s.algorithm = a;
    }
    s.dtype = parse_dtype(j.at("dtype").get<std::string>());
    s.layout = parse_layout(j.at("layout").get<std::string>());
    if (!j.at("fused_pattern").is_null()) s.fused = j.at("fused_pattern").get<std::string>();
    if (s.dtype != s.signature.dtype) throw Error(ErrorKind::format, "manifest dtype disagrees with signature");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("bad manifest line: ") + e.what());
  }
}

inline std::vector<BenchmarkSpec> parse_manifest(std::string_view text) {
  std::vector<BenchmarkSpec> out;
  std::size_t lineno = 0;
  for (const auto& line : split(text, '\n')) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse_manifest_line(line));
    } catch (const Error& e) {
      throw Error(ErrorKind::format, "manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Source emission. The generated file drives one library call through a
// Google-Benchmark style harness; it is never parsed back.

inline std::string source_file_name(const BenchmarkSpec& s) {
  std::string name = hex64(s.signature.hash64) + "_" + (s.algorithm ? to_string(*s.algorithm) : "none") + "_" +
                     to_string(s.dtype);
  if (s.layout == Layout::NHWC) name += "_nhwc";
  if (s.fused) {
    auto f = *s.fused;
    std::replace(f.begin(), f.end(), ':', '-');
    name += "_" + f;
  }
  return name + ".gen.cpp";
}

namespace detail {

inline std::string c_array(const std::vector<std::int64_t>& v) {
  std::string s = "{";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + "}";
}

inline std::string c_ident(std::string s) {
  for (auto& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  return s;
}

}  // namespace detail

inline std::string emit_benchmark_source(const BenchmarkSpec& s) {
  if (s.api_name.empty() || !api_for(s.signature.op_type))
    throw Error(ErrorKind::generation, "no library API for layer '" + s.signature.op + "'");
  const auto& sig = s.signature;
  const char* cudnn_type = s.dtype == DType::f32 ? "CUDNN_DATA_FLOAT" : "CUDNN_DATA_HALF";
  const char* format = s.layout == Layout::NCHW ? "CUDNN_TENSOR_NCHW" : "CUDNN_TENSOR_NHWC";
  std::ostringstream o;
  auto bench_name = "LAYER_" + detail::c_ident(sig.op) + "_" + hex64(sig.hash64) + "_" +
                    (s.algorithm ? to_string(*s.algorithm) : std::string("none")) + "_" + to_string(s.dtype);
  o << "// Generated benchmark. Do not edit.\n";
  o << "// signature: " << sig.canonical_string << "\n";
  o << "// api: " << s.api_name << "\n";
  if (s.fused) o << "// fused: " << *s.fused << "\n";
  o << "#include <benchmark/benchmark.h>\n";
  o << "#include \"lbound_runtime.hpp\"\n\n";
  o << "static void " << bench_name << "(benchmark::State& state) {\n";
  o << "  constexpr cudnnDataType_t data_type = " << cudnn_type << ";\n";
  o << "  constexpr cudnnTensorFormat_t format = " << format << ";\n";
  for (std::size_t i = 0; i < sig.in_shapes.size(); ++i)
    o << "  const int64_t in" << i << "_dims[] = " << detail::c_array(sig.in_shapes[i].dims) << ";\n";
  for (const auto& [k, v] : sig.params)
    if (auto ints = std::get_if<IntList>(&v)) o << "  const int64_t " << detail::c_ident(k) << "[] = " << detail::c_array(*ints) << ";\n";
    else if (auto i = std::get_if<std::int64_t>(&v)) o << "  const int64_t " << detail::c_ident(k) << " = " << *i << ";\n";
    else if (auto f = std::get_if<double>(&v)) o << "  const double " << detail::c_ident(k) << " = " << format_double(*f) << ";\n";
  if (s.algorithm) o << "  const cudnnConvolutionFwdAlgo_t algo = " << cudnn_algo_token(*s.algorithm) << ";\n";
  o << "  lbound::runtime::Setup setup(state, data_type, format);\n";
  switch (sig.op_type) {
    case OpType::Conv:
      if (s.fused) {
        o << "  auto args = setup.conv_bias_activation(in0_dims, in1_dims, pads, strides, dilations, group, algo);\n";
        o << "  for (auto _ : state)\n";
        o << "    LBOUND_CHECK_CUDNN(" << s.api_name << "(args.handle, args.alpha1, args.x, args.x_data, args.w, "
          << "args.w_data, args.conv, algo, args.workspace, args.workspace_size, args.alpha2, args.z, args.z_data, "
          << "args.bias, args.bias_data, args.activation, args.y, args.y_data));\n";
      } else {
        o << "  auto args = setup.convolution(in0_dims, in1_dims, pads, strides, dilations, group, algo);\n";
        o << "  for (auto _ : state)\n";
        o << "    LBOUND_CHECK_CUDNN(" << s.api_name << "(args.handle, args.alpha, args.x, args.x_data, args.w, "
          << "args.w_data, args.conv, algo, args.workspace, args.workspace_size, args.beta, args.y, args.y_data));\n";
      }
      break;
    case OpType::Gemm:
    case OpType::MatMul:
      o << "  auto args = setup.gemm(in0_dims, in1_dims);\n";
      o << "  for (auto _ : state)\n";
      o << "    LBOUND_CHECK_CUBLAS(" << s.api_name << "(args.handle, args.trans_a, args.trans_b, args.m, args.n, "
        << "args.k, args.alpha, args.a, args.lda, args.b, args.ldb, args.beta, args.c, args.ldc));\n";
      break;
    default:
      o << "  auto args = setup.generic(\"" << to_string(sig.op_type) << "\", in0_dims);\n";
      o << "  for (auto _ : state)\n";
      o << "    LBOUND_CHECK_CUDNN(args.invoke(" << s.api_name << "));\n";
      break;
  }
  o << "  state.counters[\"macs\"] = setup.macs();\n";
  o << "}\n";
  o << "BENCHMARK(" << bench_name << ")->UseManualTime();\n";
  return o.str();
}

}  // namespace lbound
