// SPDX-License-Identifier: Apache-2.0
#pragma once

// Analytic stand-in for running benchmarks on a GPU. Every number this
// produces is synthetic: a roofline with per-algorithm multipliers.

#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lbound/benchgen.hpp"
#include "lbound/shape_inference.hpp"

namespace lbound {

struct SystemProfile {
  std::string system_id;
  double fp32_tflops = 0;
  std::optional<double> tensor_tflops;
  double mem_bw_gbps = 0;
  double kernel_overhead_us = 0;
  std::map<ConvAlgorithm, double> algo_factor;
  bool tensor_core = false;

  // Multiplier for `a`; WING/WINGNF are only efficient for 3x3 stride-1.
  double factor(ConvAlgorithm a, bool winograd_shape) const {
    auto it = algo_factor.find(a);
    double f = it == algo_factor.end() ? 1.0 : it->second;
    if ((a == ConvAlgorithm::WING || a == ConvAlgorithm::WINGNF) && !winograd_shape) f = 10.0;
    return f;
  }

  void validate() const {
    auto fail = [&](const std::string& m) { throw Error(ErrorKind::config, "system '" + system_id + "': " + m); };
    if (system_id.empty()) throw Error(ErrorKind::config, "system profile without a name");
    if (!(fp32_tflops > 0)) fail("fp32_tflops must be positive");
    if (!(mem_bw_gbps > 0)) fail("mem_bw_gbps must be positive");
    if (!(kernel_overhead_us >= 0)) fail("kernel_overhead_us must be non-negative");
    if (tensor_tflops.has_value() != tensor_core) fail("tensor_tflops must be given iff tensor_core");
    if (tensor_tflops && !(*tensor_tflops > 0)) fail("tensor_tflops must be positive");
    for (const auto& [a, f] : algo_factor)
      if (!(f > 0)) fail(std::string("algo_factor.") + to_string(a) + " must be positive");
  }
};

inline std::map<ConvAlgorithm, double> default_algo_factors() {
  return {{ConvAlgorithm::IPGEMM, 1.0}, {ConvAlgorithm::IGEMM, 1.15}, {ConvAlgorithm::GEMM, 1.25},
          {ConvAlgorithm::WING, 0.8},   {ConvAlgorithm::WINGNF, 0.9}, {ConvAlgorithm::FFT, 1.4},
          {ConvAlgorithm::TFFT, 1.1},   {ConvAlgorithm::DRCT, 2.0}};
}

// Peak numbers of the seven evaluation GPUs. Launch overheads are made up.
inline const std::vector<SystemProfile>& builtin_systems() {
  static const std::vector<SystemProfile> systems = [] {
    auto mk = [](std::string id, double fp32, std::optional<double> tc, double bw, double overhead) {
      SystemProfile s{std::move(id), fp32, tc, bw, overhead, default_algo_factors(), tc.has_value()};
      s.validate();
      return s;
    };
    return std::vector<SystemProfile>{
        mk("Tesla_K80", 5.6, std::nullopt, 480.0, 6.0),   mk("Tesla_M60", 4.8, std::nullopt, 160.4, 6.0),
        mk("TITAN_Xp", 12.2, std::nullopt, 547.6, 4.0),   mk("TITAN_V", 14.9, 110.0, 672.0, 3.0),
        mk("Tesla_V100", 15.7, 125.0, 900.0, 3.0),        mk("Quadro_RTX", 16.3, 130.5, 624.0, 3.0),
        mk("Tesla_T4", 8.1, 65.0, 320.0, 4.0),
    };
  }();
  return systems;
}

inline const SystemProfile* find_system(const std::vector<SystemProfile>& systems, std::string_view id) {
  for (const auto& s : systems)
    if (s.system_id == id) return &s;
  return nullptr;
}

// INI-style profile file:
//
//   [Tesla_V100]
//   fp32_tflops = 15.7
//   tensor_tflops = 125      (omit for GPUs without Tensor Cores)
//   mem_bw_gbps = 900
//   kernel_overhead_us = 3
//   algo_factor.WING = 0.8   (any subset; unspecified algorithms default)
//
// `tensor_core = true|false` may be given explicitly; otherwise it follows
// the presence of tensor_tflops.
inline std::vector<SystemProfile> parse_system_profiles(std::string_view text) {
  std::vector<SystemProfile> out;
  std::vector<std::optional<bool>> explicit_tc;
  int lineno = 0;
  auto fail = [&](const std::string& m) {
    throw Error(ErrorKind::config, "system profile line " + std::to_string(lineno) + ": " + m);
  };
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    auto line = std::string(trim(raw.substr(0, raw.find('#'))));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) fail("bad section header");
      SystemProfile s;
      s.system_id = std::string(trim(std::string_view(line).substr(1, line.size() - 2)));
      s.algo_factor = default_algo_factors();
      if (find_system(out, s.system_id)) fail("duplicate system '" + s.system_id + "'");
      out.push_back(std::move(s));
      explicit_tc.emplace_back();
      continue;
    }
    if (out.empty()) fail("key outside a [system] section");
    auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    auto key = std::string(trim(std::string_view(line).substr(0, eq)));
    auto val = std::string(trim(std::string_view(line).substr(eq + 1)));
    auto& s = out.back();
    if (key == "tensor_core") {
      if (val != "true" && val != "false") fail("tensor_core must be true or false");
      explicit_tc.back() = val == "true";
      continue;
    }
    auto num = parse_double(val);
    if (!num) fail("'" + val + "' is not a number");
    if (key == "fp32_tflops") s.fp32_tflops = *num;
    else if (key == "tensor_tflops") s.tensor_tflops = *num;
    else if (key == "mem_bw_gbps") s.mem_bw_gbps = *num;
    else if (key == "kernel_overhead_us") s.kernel_overhead_us = *num;
    else if (starts_with(key, "algo_factor.")) {
      auto a = parse_algorithm(key.substr(12));
      if (!a) fail("unknown algorithm in '" + key + "'");
      s.algo_factor[*a] = *num;
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].tensor_core = explicit_tc[i].value_or(out[i].tensor_tflops.has_value());
    out[i].validate();
  }
  return out;
}

inline std::string write_system_profiles(const std::vector<SystemProfile>& systems) {
  std::ostringstream o;
  for (std::size_t i = 0; i < systems.size(); ++i) {
    const auto& s = systems[i];
    if (i) o << "\n";
    o << "[" << s.system_id << "]\n";
    o << "fp32_tflops = " << format_double(s.fp32_tflops) << "\n";
    if (s.tensor_tflops) o << "tensor_tflops = " << format_double(*s.tensor_tflops) << "\n";
    o << "mem_bw_gbps = " << format_double(s.mem_bw_gbps) << "\n";
    o << "kernel_overhead_us = " << format_double(s.kernel_overhead_us) << "\n";
    for (const auto& [a, f] : s.algo_factor) o << "algo_factor." << to_string(a) << " = " << format_double(f) << "\n";
  }
  return o.str();
}

inline std::vector<SystemProfile> load_system_profiles(const std::string& path) {
  return parse_system_profiles(read_file(path));
}

// ---------------------------------------------------------------------------

struct SimulateOptions {
  std::optional<std::uint64_t> jitter_seed;  // multiplicative noise in [-3%, +3%]
};

struct CostBreakdown {
  std::int64_t macs = 0;
  std::int64_t bytes = 0;
  double peak_tflops = 0;
  double compute_us = 0;
  double memory_us = 0;
  double factor = 1.0;
  bool tensor_core = false;
};

namespace detail {

inline bool winograd_shape(const Attributes& p) {
  auto k = attr_ints(p, "kernel_shape").value_or(IntList{});
  auto s = attr_ints(p, "strides").value_or(IntList(k.size(), 1));
  if (k.size() != 2) return false;
  return k[0] == 3 && k[1] == 3 && std::all_of(s.begin(), s.end(), [](auto v) { return v == 1; });
}

inline bool strided(const Attributes& p) {
  auto s = attr_ints(p, "strides").value_or(IntList{});
  return std::any_of(s.begin(), s.end(), [](auto v) { return v > 1; });
}

inline double jitter(std::uint64_t seed, const PerfKey& key) {
  std::mt19937_64 rng(seed ^ fnv1a64(key.to_string()));
  double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
  return 1.0 + 0.03 * (2.0 * u - 1.0);
}

}  // namespace detail

inline bool uses_tensor_cores(const BenchmarkSpec& spec, const SystemProfile& sys) {
  if (spec.dtype != DType::f16 || !sys.tensor_core) return false;
  const ApiRow* row = spec.fused ? api_row("ConvBiasActivation") : api_for(spec.signature.op_type);
  return row && row->tensor_core_capable;
}

inline CostBreakdown cost(const BenchmarkSpec& spec, const SystemProfile& sys) {
  const auto& sig = spec.signature;
  auto shapes = infer_layer(sig.op, sig.op_type, sig.params, sig.in_shapes);
  CostBreakdown c;
  c.macs = layer_macs(sig.op_type, shapes.params, sig.in_shapes, shapes.out_shapes);
  std::int64_t elems = 0;
  for (const auto& s : sig.in_shapes) elems += s.element_count();
  for (const auto& s : shapes.out_shapes) elems += s.element_count();
  c.bytes = elems * static_cast<std::int64_t>(dtype_size(spec.dtype));
  c.tensor_core = uses_tensor_cores(spec, sys);
  c.peak_tflops = c.tensor_core ? *sys.tensor_tflops : sys.fp32_tflops;
  c.compute_us = 2.0 * static_cast<double>(c.macs) / (c.peak_tflops * 1e6);
  c.memory_us = static_cast<double>(c.bytes) / (sys.mem_bw_gbps * 1e3);
  if (spec.algorithm) c.factor = sys.factor(*spec.algorithm, detail::winograd_shape(shapes.params));
  return c;
}

// Fused specs are keyed on the head convolution; the bias and activation
// ride along in the same kernel, so only the conv is costed.
inline PerfRecord simulate(const BenchmarkSpec& spec, const SystemProfile& sys, const SimulateOptions& opt = {}) {
  PerfRecord r;
  r.key = spec.key(sys.system_id);
  r.source = RecordSource::simulated;
  bool fft = spec.algorithm && (*spec.algorithm == ConvAlgorithm::FFT || *spec.algorithm == ConvAlgorithm::TFFT);
  if (fft && detail::strided(spec.signature.params)) {
    r.status = RecordStatus::unsupported;
    return r;
  }
  auto c = cost(spec, sys);
  double latency = std::max(c.compute_us, c.memory_us) * c.factor + sys.kernel_overhead_us;
  if (opt.jitter_seed) latency *= detail::jitter(*opt.jitter_seed, r.key);
  r.status = RecordStatus::ok;
  r.latency_us = latency;
  r.metadata.kernels = {std::string(c.tensor_core ? "sim_h884_" : "sim_sgemm_") + to_string(spec.signature.op_type)};
  r.metadata.metrics = {{"macs", static_cast<double>(c.macs)},
                        {"bytes", static_cast<double>(c.bytes)},
                        {"compute_us", c.compute_us},
                        {"memory_us", c.memory_us},
                        {"flops", 2.0 * static_cast<double>(c.macs)}};
  return r;
}

}  // namespace lbound
