// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "lbound/benchgen.hpp"
#include "lbound/perfdb.hpp"
#include "lbound/profile_ingest.hpp"

namespace lbound {

enum class Mode { sequential, parallel };

inline const char* to_string(Mode m) { return m == Mode::sequential ? "sequential" : "parallel"; }

struct AnnotateOptions {
  std::string system;
  DType dtype = DType::f32;
  Layout layout = Layout::NCHW;  // convolution records; other layers are stored as NCHW
  bool fusion = false;
  bool allow_missing = false;
  // Per node index: run this convolution algorithm instead of the best one.
  std::map<std::size_t, ConvAlgorithm> forced_algorithms;
};

struct AppliedFusion {
  FusionSite site;
  double member_sum_us = 0;
  double fused_us = 0;
  double profit_us() const { return member_sum_us - fused_us; }
};

struct LatencyAnnotatedGraph {
  ModelGraph graph;
  std::vector<double> latency_us;              // by node index
  std::vector<std::optional<PerfKey>> chosen;  // record each latency came from
  std::vector<MissKey> misses;                 // only populated with allow_missing
  std::vector<AppliedFusion> fusions;

  double latency(const std::string& id) const { return latency_us[graph.index_of(id)]; }
};

namespace detail {

inline void add_misses(std::vector<MissKey>& into, const std::vector<MissKey>& more) {
  for (const auto& m : more)
    if (std::find(into.begin(), into.end(), m) == into.end()) into.push_back(m);
}

inline Layout record_layout(OpType op, Layout requested) { return op == OpType::Conv ? requested : Layout::NCHW; }

}  // namespace detail

// Builds a latency-annotated graph from best() records. Unsupported layers
// (no library API) carry zero. Misses abort with the complete list unless
// allow_missing is set.
inline LatencyAnnotatedGraph annotate(const ModelGraph& g, const PerfDb& db, const AnnotateOptions& opt) {
  LatencyAnnotatedGraph a{g, std::vector<double>(g.size(), 0.0), std::vector<std::optional<PerfKey>>(g.size()), {}, {}};
  std::vector<MissKey> misses;
  std::vector<std::optional<LayerSignature>> sigs(g.size());
  for (auto i : topo_indices(g)) {
    const auto& n = g.nodes()[i];
    if (!is_supported(n.op_type)) continue;
    auto sig = signature(n, opt.dtype);
    sigs[i] = sig;
    auto layout = detail::record_layout(n.op_type, opt.layout);
    try {
      if (auto f = opt.forced_algorithms.find(i); f != opt.forced_algorithms.end() && n.op_type == OpType::Conv) {
        auto key = make_key(opt.system, sig, f->second, layout, std::nullopt);
        const auto* r = db.find(key);
        if (!r || !r->ok())
          throw MissError({{opt.system, opt.dtype, sig.canonical_string,
                            std::string("algorithm=") + to_string(f->second)}});
        a.latency_us[i] = *r->latency_us;
        a.chosen[i] = r->key;
      } else {
        auto r = db.best(opt.system, opt.dtype, sig, BestFilter{layout, std::nullopt, std::nullopt});
        a.latency_us[i] = *r.latency_us;
        a.chosen[i] = r.key;
      }
    } catch (const MissError& e) {
      detail::add_misses(misses, e.misses());
    }
  }
  if (!misses.empty() && !opt.allow_missing) throw MissError(misses);
  a.misses = misses;
  if (opt.fusion) {
    for (auto& site : find_fusion_sites(g)) {
      auto head = site.members[0];
      if (!sigs[head]) continue;
      const PerfRecord* fused = nullptr;
      std::optional<PerfRecord> hit;
      try {
        hit = db.best(opt.system, opt.dtype, *sigs[head], BestFilter{opt.layout, site.fused_key, std::nullopt});
        fused = &*hit;
      } catch (const MissError&) {
        // No fused benchmark: the members keep their own latencies.
      }
      if (!fused) continue;
      AppliedFusion af{site, 0.0, *fused->latency_us};
      for (auto m : site.members) af.member_sum_us += a.latency_us[m];
      for (auto m : site.members) {
        a.latency_us[m] = 0.0;
        a.chosen[m].reset();
      }
      a.latency_us[head] = *fused->latency_us;
      a.chosen[head] = fused->key;
      a.fusions.push_back(std::move(af));
    }
  }
  return a;
}

// Sum in topological order.
inline double sequential_total(const LatencyAnnotatedGraph& a) {
  double total = 0;
  for (auto i : topo_indices(a.graph)) total += a.latency_us[i];
  return total;
}

struct SequentialResult {
  double latency_us = 0;
  LatencyAnnotatedGraph annotated;
};

inline SequentialResult lower_bound_sequential(const ModelGraph& g, const PerfDb& db, const AnnotateOptions& opt) {
  auto a = annotate(g, db, opt);
  double total = sequential_total(a);
  return {total, std::move(a)};
}

struct CriticalPath {
  std::vector<std::string> nodes;
  double total_latency_us = 0;
};

// Longest path by shortest path over negated node latencies, one pass in
// topological order. A virtual source feeds every producer-less node and a
// virtual sink drains every consumer-less node; neither appears in `nodes`.
// Equal-length paths resolve to the lexicographically smallest id sequence.
inline CriticalPath critical_path(const ModelGraph& g, const std::vector<double>& latency_us) {
  if (latency_us.size() != g.size()) throw Error(ErrorKind::state, "latency vector does not match graph");
  auto order = topo_indices(g);
  const std::size_t n = g.size();
  if (n == 0) return {};
  std::vector<double> dist(n, 0.0);
  std::vector<std::optional<std::size_t>> pred(n);
  auto path_to = [&](std::size_t v) {
    std::vector<std::string> p;
    for (std::optional<std::size_t> cur = v; cur; cur = pred[*cur]) p.push_back(g.nodes()[*cur].id);
    std::reverse(p.begin(), p.end());
    return p;
  };
  for (auto v : order) {
    const auto& ps = g.preds(v);
    if (ps.empty()) {
      dist[v] = -latency_us[v];
      continue;
    }
    // Ties compare whole candidate paths: one predecessor's path may be a
    // prefix of another's when zero-latency nodes sit between them.
    auto via = [&](std::size_t u) {
      auto p = path_to(u);
      p.push_back(g.nodes()[v].id);
      return p;
    };
    std::optional<std::size_t> best;
    for (auto u : ps) {
      if (!best || dist[u] < dist[*best]) {
        best = u;
      } else if (dist[u] == dist[*best] && via(u) < via(*best)) {
        best = u;
      }
    }
    pred[v] = best;
    dist[v] = dist[*best] - latency_us[v];
  }
  std::optional<std::size_t> end;
  for (auto v : order) {
    if (!g.succs(v).empty()) continue;
    if (!end || dist[v] < dist[*end] || (dist[v] == dist[*end] && path_to(v) < path_to(*end))) end = v;
  }
  CriticalPath cp;
  cp.nodes = path_to(*end);
  for (const auto& id : cp.nodes) cp.total_latency_us += latency_us[g.index_of(id)];
  return cp;
}

inline CriticalPath critical_path(const LatencyAnnotatedGraph& a) { return critical_path(a.graph, a.latency_us); }

inline double lower_bound(const LatencyAnnotatedGraph& a, Mode m) {
  return m == Mode::sequential ? sequential_total(a) : critical_path(a).total_latency_us;
}

struct BenanzaRatio {
  double br = 0;
  double speedup = 0;
  bool exceeds_measured() const { return br > 1.0; }
};

inline BenanzaRatio benanza_ratio(double lower_bound_us, double measured_us) {
  if (!(lower_bound_us > 0) || !(measured_us > 0))
    throw Error(ErrorKind::domain, "Benanza ratio needs positive latencies (got lower bound " +
                                       format_double(lower_bound_us) + ", measured " + format_double(measured_us) + ")");
  double br = lower_bound_us / measured_us;
  return {br, 1.0 / br};
}

// ---------------------------------------------------------------------------
// Algorithm advice

inline bool is_conv_call(const std::string& api) {
  return api == "cudnnConvolutionForward" || api == "cudnnConvolutionBiasActivationForward";
}

inline std::string dims_param(const TensorShape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.dims.size(); ++i) out += (i ? "," : "") + std::to_string(s.dims[i]);
  return out + "]";
}

struct ConvCallMatch {
  std::size_t node = 0;
  const ApiCall* call = nullptr;
  std::optional<ConvAlgorithm> algorithm;
  std::vector<std::string> warnings;
};

// i-th logged convolution call <-> i-th convolution in topological order.
inline std::vector<ConvCallMatch> match_conv_calls(const ExecutionProfile& p, const ModelGraph& g) {
  std::vector<const ApiCall*> calls;
  for (const auto& c : p.api_calls)
    if (is_conv_call(c.api_name)) calls.push_back(&c);
  std::vector<std::size_t> convs;
  for (auto i : topo_indices(g))
    if (g.nodes()[i].op_type == OpType::Conv) convs.push_back(i);
  if (calls.size() != convs.size())
    throw Error(ErrorKind::correlation, "profile has " + std::to_string(calls.size()) +
                                            " convolution calls but the model has " + std::to_string(convs.size()) +
                                            " convolution layers");
  std::vector<ConvCallMatch> out;
  for (std::size_t k = 0; k < calls.size(); ++k) {
    ConvCallMatch m{convs[k], calls[k], std::nullopt, {}};
    if (auto it = calls[k]->params.find("algo"); it != calls[k]->params.end()) {
      m.algorithm = parse_algorithm(it->second);
      if (!m.algorithm) m.algorithm = algorithm_from_cudnn_token(it->second);
    }
    const auto& node = g.nodes()[convs[k]];
    auto check = [&](const char* key, const std::string& want) {
      auto it = calls[k]->params.find(key);
      if (it != calls[k]->params.end() && it->second != want)
        m.warnings.push_back("call " + std::to_string(calls[k]->seq) + " " + key + "=" + it->second +
                             " but layer '" + node.id + "' has " + want);
    };
    if (node.shapes_inferred && !node.in_shapes.empty()) check("x", dims_param(node.in_shapes[0]));
    if (node.shapes_inferred && node.in_shapes.size() > 1) check("w", dims_param(node.in_shapes[1]));
    out.push_back(std::move(m));
  }
  return out;
}

struct AlgorithmAdviceEntry {
  std::string node_id;
  std::optional<ConvAlgorithm> logged;  // unset when the log had no usable token
  std::optional<ConvAlgorithm> ideal;
  std::optional<double> chosen_us;       // unset for unknown entries
  double ideal_us = 0;
  bool unknown = false;
  double ratio() const { return chosen_us ? *chosen_us / ideal_us : 1.0; }
};

struct AlgorithmAdvice {
  std::vector<AlgorithmAdviceEntry> entries;  // chosen slower than ideal
  std::vector<AlgorithmAdviceEntry> unknown;  // logged algorithm not in the database
  double chosen_lb_us = 0;
  double ideal_lb_us = 0;
  double aggregate_speedup = 1.0;
  std::vector<std::string> warnings;
};

// Aggregate = sequential lower bound with the logged algorithms over the one
// with ideal algorithms. Layers whose logged choice is unknown are left out of
// both sums.
inline AlgorithmAdvice algorithm_advice(const ExecutionProfile& profile, const ModelGraph& g, const PerfDb& db,
                                        const std::string& system, DType dt, Layout layout = Layout::NCHW) {
  AlgorithmAdvice adv;
  auto matches = match_conv_calls(profile, g);
  auto ideal = annotate(g, db, {system, dt, layout, false, false, {}});
  std::vector<std::optional<double>> chosen(g.size());
  std::set<std::size_t> excluded;
  for (const auto& m : matches) {
    for (const auto& w : m.warnings) adv.warnings.push_back("correlation warning: " + w);
    const auto& ideal_key = ideal.chosen[m.node];
    AlgorithmAdviceEntry e{g.nodes()[m.node].id, m.algorithm, ideal_key ? ideal_key->algorithm : std::nullopt,
                           std::nullopt, ideal.latency_us[m.node], false};
    const PerfRecord* r = nullptr;
    if (m.algorithm)
      r = db.find(make_key(system, signature(g.nodes()[m.node], dt), *m.algorithm, layout, std::nullopt));
    if (!r || !r->ok()) {
      e.unknown = true;
      excluded.insert(m.node);
      adv.unknown.push_back(e);
      continue;
    }
    e.chosen_us = *r->latency_us;
    chosen[m.node] = e.chosen_us;
    if (*e.chosen_us > e.ideal_us) adv.entries.push_back(e);
  }
  for (auto i : topo_indices(g)) {
    if (excluded.count(i)) continue;
    adv.ideal_lb_us += ideal.latency_us[i];
    adv.chosen_lb_us += chosen[i].value_or(ideal.latency_us[i]);
  }
  adv.aggregate_speedup = adv.ideal_lb_us > 0 ? adv.chosen_lb_us / adv.ideal_lb_us : 1.0;
  return adv;
}

// Node index -> logged algorithm, for layers whose logged token is known.
inline std::map<std::size_t, ConvAlgorithm> logged_algorithms(const ExecutionProfile& p, const ModelGraph& g) {
  std::map<std::size_t, ConvAlgorithm> out;
  for (const auto& m : match_conv_calls(p, g))
    if (m.algorithm) out[m.node] = *m.algorithm;
  return out;
}

// ---------------------------------------------------------------------------
// Framework inefficiencies

struct ExpectedCall {
  std::string node_id;
  std::string api_name;
  std::map<std::string, std::string> params;
};

// Library calls an ideal framework would make: one per supported layer, in
// topological order; applied fusion sites collapse into one fused call.
inline std::vector<ExpectedCall> expected_calls(const ModelGraph& g, DType dt,
                                                const std::vector<AppliedFusion>& fused = {}) {
  std::map<std::size_t, const AppliedFusion*> fused_head;
  std::set<std::size_t> fused_tail;
  for (const auto& f : fused) {
    fused_head[f.site.members[0]] = &f;
    for (std::size_t k = 1; k < f.site.members.size(); ++k) fused_tail.insert(f.site.members[k]);
  }
  std::vector<ExpectedCall> out;
  for (auto i : topo_indices(g)) {
    const auto& n = g.nodes()[i];
    const auto* row = api_for(n.op_type);
    if (!row || fused_tail.count(i)) continue;
    ExpectedCall c{n.id, concrete_api(*row, dt), {}};
    if (fused_head.count(i)) c.api_name = "cudnnConvolutionBiasActivationForward";
    if (n.shapes_inferred && !n.in_shapes.empty()) c.params["x"] = dims_param(n.in_shapes[0]);
    if (n.op_type == OpType::Conv && n.shapes_inferred) {
      c.params["w"] = dims_param(n.in_shapes[1]);
      auto pads = attr_ints(n.params, "pads").value_or(IntList{});
      pads.resize(pads.size() / 2);  // cuDNN takes symmetric padding; begin values
      c.params["pads"] = dims_param({pads, dt});
      c.params["strides"] = dims_param({attr_ints(n.params, "strides").value_or(IntList{}), dt});
      c.params["dilations"] = dims_param({attr_ints(n.params, "dilations").value_or(IntList{}), dt});
      c.params["group"] = std::to_string(attr_int(n.params, "group").value_or(1));
    }
    out.push_back(std::move(c));
  }
  return out;
}

enum class DeviationKind { missing_call, extra_call, param_mismatch, unexpected_kernel, foreign_api, excessive_synchronization };

inline const char* to_string(DeviationKind k) {
  switch (k) {
    case DeviationKind::missing_call: return "missing_call";
    case DeviationKind::extra_call: return "extra_call";
    case DeviationKind::param_mismatch: return "param_mismatch";
    case DeviationKind::unexpected_kernel: return "unexpected_kernel";
    case DeviationKind::foreign_api: return "foreign_api";
    case DeviationKind::excessive_synchronization: return "excessive_synchronization";
  }
  return "?";
}

struct Deviation {
  DeviationKind kind;
  std::string name;                 // API or kernel name
  std::optional<std::int64_t> seq;  // logged call sequence number, when one applies
  std::string node_id;              // expected layer, when one applies
  std::string detail;
  std::int64_t count = 1;
  std::vector<std::string> backtrace;
};

inline bool is_library_compute_call(const std::string& api) {
  if (api == "cublasSgemm" || api == "cublasHgemm" || api == "cublasGemmEx") return true;
  for (const auto& r : api_table())
    if (r.api_name == api) return true;
  return false;
}

inline bool is_cuda_runtime_call(const std::string& api) { return starts_with(api, "cuda"); }

// Compares the logged library calls against the expected sequence. Calls are
// aligned by longest common subsequence on API name; setup calls (descriptor
// creation, algorithm queries) are not compared. CUDA runtime entries and
// kernels that ran between two library calls are reported as foreign work.
inline std::vector<Deviation> framework_diff(const ExecutionProfile& profile, const std::vector<ExpectedCall>& expected) {
  std::vector<Deviation> out;
  std::vector<const ApiCall*> logged;
  for (const auto& c : profile.api_calls)
    if (is_library_compute_call(c.api_name)) logged.push_back(&c);

  const std::size_t n = logged.size(), m = expected.size();
  std::vector<std::vector<std::uint32_t>> lcs(n + 1, std::vector<std::uint32_t>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;)
    for (std::size_t j = m; j-- > 0;)
      lcs[i][j] = logged[i]->api_name == expected[j].api_name ? lcs[i + 1][j + 1] + 1
                                                              : std::max(lcs[i + 1][j], lcs[i][j + 1]);
  std::size_t i = 0, j = 0;
  while (i < n || j < m) {
    if (i < n && j < m && logged[i]->api_name == expected[j].api_name && lcs[i][j] == lcs[i + 1][j + 1] + 1) {
      std::string diffs;
      for (const auto& [k, v] : expected[j].params) {
        auto it = logged[i]->params.find(k);
        if (it != logged[i]->params.end() && it->second != v)
          diffs += (diffs.empty() ? "" : "; ") + k + " logged " + it->second + " expected " + v;
      }
      if (!diffs.empty())
        out.push_back({DeviationKind::param_mismatch, logged[i]->api_name, logged[i]->seq, expected[j].node_id, diffs, 1,
                       logged[i]->backtrace});
      ++i;
      ++j;
    } else if (j < m && (i == n || lcs[i][j + 1] >= lcs[i + 1][j])) {
      out.push_back({DeviationKind::missing_call, expected[j].api_name, std::nullopt, expected[j].node_id,
                     "expected call not in the log", 1, {}});
      ++j;
    } else {
      out.push_back({DeviationKind::extra_call, logged[i]->api_name, logged[i]->seq, "", "call has no matching layer", 1,
                     logged[i]->backtrace});
      ++i;
    }
  }

  for (const auto& k : profile.kernels)
    if (k.between_calls())
      out.push_back({DeviationKind::unexpected_kernel, k.name, k.seq_between->second, "",
                     "ran between calls " + std::to_string(k.seq_between->first) + " and " +
                         std::to_string(k.seq_between->second) + " (" + format_double(k.duration_us) + " us)",
                     1, {}});

  // CUDA runtime entries, aggregated per name. Stream waits between two
  // library calls are reported as synchronization overhead.
  std::map<std::string, Deviation> foreign;
  std::optional<std::int64_t> last_library;
  std::int64_t waits = 0;
  std::vector<std::string> wait_trace;
  std::int64_t pending_waits = 0;
  std::vector<std::string> pending_trace;
  for (const auto& c : profile.api_calls) {
    if (is_library_compute_call(c.api_name)) {
      if (last_library) {
        waits += pending_waits;
        if (wait_trace.empty()) wait_trace = pending_trace;
      }
      pending_waits = 0;
      pending_trace.clear();
      last_library = c.seq;
      continue;
    }
    if (!is_cuda_runtime_call(c.api_name)) continue;
    if (c.api_name == "cudaStreamWaitEvent") {
      ++pending_waits;
      if (pending_trace.empty()) pending_trace = c.backtrace;
      continue;
    }
    auto [it, fresh] = foreign.try_emplace(c.api_name, Deviation{DeviationKind::foreign_api, c.api_name, c.seq, "",
                                                                   "CUDA runtime call outside the library", 0, c.backtrace});
    ++it->second.count;
  }
  if (waits > 0)
    out.push_back({DeviationKind::excessive_synchronization, "cudaStreamWaitEvent", std::nullopt, "",
                   "stream waits between consecutive library calls", waits, wait_trace});
  for (auto& [name, d] : foreign) out.push_back(std::move(d));
  return out;
}

// ---------------------------------------------------------------------------
// Fusion, Tensor Core, joint and cross-system analyses

struct FusionAnalysis {
  Mode mode = Mode::sequential;
  double unfused_lb_us = 0;
  double fused_lb_us = 0;
  std::size_t fusable_sites = 0;
  std::size_t fusable_layers = 0;  // member layers over all detected sites
  std::size_t total_layers = 0;
  std::vector<AppliedFusion> applied;

  double profit_us() const { return unfused_lb_us - fused_lb_us; }
  double profit_ratio() const { return fused_lb_us > 0 ? unfused_lb_us / fused_lb_us : 1.0; }
};

inline FusionAnalysis fusion_analysis(const ModelGraph& g, const PerfDb& db, const std::string& system, DType dt,
                                      Mode mode, Layout layout = Layout::NCHW) {
  FusionAnalysis r;
  r.mode = mode;
  auto unfused = annotate(g, db, {system, dt, layout, false, false, {}});
  auto fused = annotate(g, db, {system, dt, layout, true, false, {}});
  r.unfused_lb_us = lower_bound(unfused, mode);
  r.fused_lb_us = lower_bound(fused, mode);
  auto sites = find_fusion_sites(g);
  r.fusable_sites = sites.size();
  for (const auto& s : sites) r.fusable_layers += s.members.size();
  r.total_layers = g.size();
  r.applied = fused.fusions;
  return r;
}

struct TensorCoreAnalysis {
  Mode mode = Mode::sequential;
  Layout layout = Layout::NCHW;
  double f32_lb_us = 0;
  double f16_lb_us = 0;
  std::optional<bool> tc_used_in_profile;
  double speedup() const { return f32_lb_us / f16_lb_us; }
};

inline TensorCoreAnalysis tensorcore_analysis(const ModelGraph& g, const PerfDb& db, const std::string& system, Mode mode,
                                              Layout layout = Layout::NCHW,
                                              const ExecutionProfile* profile = nullptr) {
  TensorCoreAnalysis r;
  r.mode = mode;
  r.layout = layout;
  std::vector<MissKey> misses;
  std::optional<LatencyAnnotatedGraph> f32, f16;
  try {
    f32 = annotate(g, db, {system, DType::f32, layout, false, false, {}});
  } catch (const MissError& e) {
    detail::add_misses(misses, e.misses());
  }
  try {
    f16 = annotate(g, db, {system, DType::f16, layout, false, false, {}});
  } catch (const MissError& e) {
    detail::add_misses(misses, e.misses());
  }
  if (!misses.empty()) throw MissError(misses);
  r.f32_lb_us = lower_bound(*f32, mode);
  r.f16_lb_us = lower_bound(*f16, mode);
  if (profile && profile->has_kernels)
    r.tc_used_in_profile = std::any_of(profile->kernels.begin(), profile->kernels.end(),
                                       [](const KernelRecord& k) { return detect_tensorcore(k.name); });
  return r;
}

struct Scenario {
  bool parallel = false;
  bool ideal_algo = false;
  bool fusion = false;
  bool tensor_core = false;
  Layout layout = Layout::NCHW;
  DType base_dtype = DType::f32;

  std::string name() const {
    std::string s;
    auto add = [&](bool on, const char* n) {
      if (on) s += (s.empty() ? "" : "+") + std::string(n);
    };
    add(parallel, "parallel");
    add(ideal_algo, "ideal_algo");
    add(fusion, "fusion");
    add(tensor_core, "tensor_core");
    if (layout == Layout::NHWC) s += (s.empty() ? "" : "+") + std::string("NHWC");
    return s.empty() ? "baseline" : s;
  }
};

struct JointResult {
  Scenario scenario;
  DType dtype = DType::f32;
  double lb_us = 0;
  std::optional<double> measured_us;
  std::optional<double> speedup;  // measured / lb
  std::size_t fusions_applied = 0;
  bool used_logged_algorithms = false;
};

// Toggles compose in this order: data type and layout, logged or ideal
// convolution algorithms, fusion substitution, then sum or critical path.
// Without ideal_algo the logged algorithms are used when a profile is given;
// with no profile every layer already runs its best algorithm.
inline JointResult joint_analysis(const ModelGraph& g, const PerfDb& db, const std::string& system, const Scenario& s,
                                  const ExecutionProfile* profile = nullptr,
                                  std::optional<double> measured_us = std::nullopt) {
  JointResult r;
  r.scenario = s;
  r.dtype = s.tensor_core ? DType::f16 : s.base_dtype;
  AnnotateOptions opt{system, r.dtype, s.layout, s.fusion, false, {}};
  if (!s.ideal_algo && profile) {
    opt.forced_algorithms = logged_algorithms(*profile, g);
    r.used_logged_algorithms = true;
  }
  auto a = annotate(g, db, opt);
  r.lb_us = lower_bound(a, s.parallel ? Mode::parallel : Mode::sequential);
  r.fusions_applied = a.fusions.size();
  if (!measured_us && profile) measured_us = profile->measured_latency_us();
  r.measured_us = measured_us;
  if (measured_us && r.lb_us > 0) r.speedup = *measured_us / r.lb_us;
  return r;
}

struct SystemRanking {
  std::string system;
  std::optional<double> lb_us;
  std::optional<double> cost_score;
  bool flagged = false;  // a layer record was missing
  std::size_t missing = 0;
};

enum class RankKey { lower_bound, cost };

inline std::vector<SystemRanking> advise_systems(const ModelGraph& g, const PerfDb& db,
                                                 const std::vector<std::string>& systems, DType dt,
                                                 const std::map<std::string, double>& cost_per_hour = {},
                                                 RankKey key = RankKey::lower_bound, Mode mode = Mode::sequential) {
  std::vector<SystemRanking> rows;
  for (const auto& sys : systems) {
    SystemRanking row{sys, std::nullopt, std::nullopt, false, 0};
    auto a = annotate(g, db, {sys, dt, Layout::NCHW, false, true, {}});
    if (!a.misses.empty()) {
      row.flagged = true;
      row.missing = a.misses.size();
    } else {
      row.lb_us = lower_bound(a, mode);
      if (auto it = cost_per_hour.find(sys); it != cost_per_hour.end()) row.cost_score = *row.lb_us * it->second;
    }
    rows.push_back(std::move(row));
  }
  auto score = [&](const SystemRanking& r) { return key == RankKey::cost ? r.cost_score : r.lb_us; };
  std::stable_sort(rows.begin(), rows.end(), [&](const SystemRanking& a, const SystemRanking& b) {
    auto sa = score(a), sb = score(b);
    return std::make_tuple(a.flagged, !sa.has_value(), sa.value_or(0.0), a.system) <
           std::make_tuple(b.flagged, !sb.has_value(), sb.value_or(0.0), b.system);
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Report

struct AnalysisReport {
  std::string model;
  std::string system;
  DType dtype = DType::f32;
  std::int64_t batch = 1;
  Layout layout = Layout::NCHW;
  LatencyAnnotatedGraph annotated;
  double lb_sequential_us = 0;
  double lb_parallel_us = 0;
  CriticalPath path;
  std::optional<double> measured_ms;
  std::optional<BenanzaRatio> br_sequential;
  std::optional<BenanzaRatio> br_parallel;
  std::optional<AlgorithmAdvice> algorithm;
  std::optional<std::vector<Deviation>> deviations;
  std::optional<FusionAnalysis> fusion;
  std::optional<TensorCoreAnalysis> tensor_core;
  std::optional<JointResult> joint;
  std::vector<std::string> warnings;
};

struct ReportOptions {
  std::string system;
  DType dtype = DType::f32;
  Layout layout = Layout::NCHW;
  bool allow_missing = false;
  const ExecutionProfile* profile = nullptr;
  std::optional<double> measured_ms;  // overrides the profile's measurement
  Scenario scenario;                  // joint analysis runs when any toggle is on
  bool fusion_analysis = false;
  bool tensor_core_analysis = false;
};

inline bool any_toggle(const Scenario& s) {
  return s.parallel || s.ideal_algo || s.fusion || s.tensor_core || s.layout == Layout::NHWC;
}

inline AnalysisReport analyze(const ModelGraph& g, const PerfDb& db, const ReportOptions& o) {
  AnalysisReport r;
  r.model = g.name();
  r.system = o.system;
  r.dtype = o.dtype;
  r.layout = o.layout;
  r.batch = g.graph_inputs().empty() || g.graph_inputs()[0].dims.empty() ? 1 : g.graph_inputs()[0].dims[0];
  r.annotated = annotate(g, db, {o.system, o.dtype, o.layout, false, o.allow_missing, {}});
  for (const auto& m : r.annotated.misses) r.warnings.push_back("missing record, counted as 0: " + m.to_string());
  r.lb_sequential_us = sequential_total(r.annotated);
  r.path = critical_path(r.annotated);
  r.lb_parallel_us = r.path.total_latency_us;
  r.measured_ms = o.measured_ms;
  if (!r.measured_ms && o.profile) r.measured_ms = o.profile->measured_latency_ms;
  if (r.measured_ms) {
    double us = *r.measured_ms * 1000.0;
    if (r.lb_sequential_us > 0) r.br_sequential = benanza_ratio(r.lb_sequential_us, us);
    if (r.lb_parallel_us > 0) r.br_parallel = benanza_ratio(r.lb_parallel_us, us);
    if (r.br_sequential && r.br_sequential->exceeds_measured())
      r.warnings.push_back("lower bound exceeds the measured latency; database or profile may be stale");
  }
  if (o.profile) {
    r.algorithm = algorithm_advice(*o.profile, g, db, o.system, o.dtype, o.layout);
    for (const auto& w : r.algorithm->warnings) r.warnings.push_back(w);
    r.deviations = framework_diff(*o.profile, expected_calls(g, o.dtype));
  }
  if (o.fusion_analysis) r.fusion = fusion_analysis(g, db, o.system, o.dtype, Mode::sequential, o.layout);
  if (o.tensor_core_analysis)
    r.tensor_core = tensorcore_analysis(g, db, o.system, Mode::sequential, o.layout, o.profile);
  if (any_toggle(o.scenario)) {
    auto s = o.scenario;
    s.base_dtype = o.dtype;
    std::optional<double> measured;
    if (r.measured_ms) measured = *r.measured_ms * 1000.0;
    r.joint = joint_analysis(g, db, o.system, s, o.profile, measured);
  }
  return r;
}

namespace detail {

inline nlohmann::ordered_json opt_num(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json();
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const AnalysisReport& r) {
  using J = nlohmann::ordered_json;
  J j;
  j["model"] = r.model;
  j["system"] = r.system;
  j["dtype"] = to_string(r.dtype);
  j["batch"] = r.batch;
  j["layout"] = to_string(r.layout);
  j["lb_sequential_us"] = r.lb_sequential_us;
  j["lb_parallel_us"] = r.lb_parallel_us;
  j["measured_ms"] = detail::opt_num(r.measured_ms);
  auto br = [](const std::optional<BenanzaRatio>& b) {
    if (!b) return J();
    J x;
    x["br"] = b->br;
    x["speedup"] = b->speedup;
    return x;
  };
  j["br_sequential"] = br(r.br_sequential);
  j["br_parallel"] = br(r.br_parallel);
  j["critical_path"] = r.path.nodes;
  J layers = J::array();
  const auto& g = r.annotated.graph;
  for (auto i : topo_indices(g)) {
    J l;
    l["id"] = g.nodes()[i].id;
    l["type"] = to_string(g.nodes()[i].op_type);
    l["latency_us"] = r.annotated.latency_us[i];
    const auto& k = r.annotated.chosen[i];
    l["algorithm"] = k && k->algorithm ? J(to_string(*k->algorithm)) : J();
    layers.push_back(l);
  }
  j["layers"] = layers;
  J misses = J::array();
  for (const auto& m : r.annotated.misses) misses.push_back(m.to_string());
  j["missing"] = misses;
  if (r.algorithm) {
    J a;
    auto entry = [](const AlgorithmAdviceEntry& e) {
      J x;
      x["layer"] = e.node_id;
      x["logged"] = e.logged ? J(to_string(*e.logged)) : J();
      x["ideal"] = e.ideal ? J(to_string(*e.ideal)) : J();
      x["chosen_us"] = detail::opt_num(e.chosen_us);
      x["ideal_us"] = e.ideal_us;
      x["ratio"] = e.unknown ? J() : J(e.ratio());
      return x;
    };
    a["entries"] = J::array();
    for (const auto& e : r.algorithm->entries) a["entries"].push_back(entry(e));
    a["unknown"] = J::array();
    for (const auto& e : r.algorithm->unknown) a["unknown"].push_back(entry(e));
    a["chosen_lb_us"] = r.algorithm->chosen_lb_us;
    a["ideal_lb_us"] = r.algorithm->ideal_lb_us;
    a["aggregate_speedup"] = r.algorithm->aggregate_speedup;
    j["algorithm_advice"] = a;
  }
  if (r.deviations) {
    J d = J::array();
    for (const auto& x : *r.deviations) {
      J e;
      e["kind"] = to_string(x.kind);
      e["name"] = x.name;
      e["seq"] = x.seq ? J(*x.seq) : J();
      e["layer"] = x.node_id.empty() ? J() : J(x.node_id);
      e["detail"] = x.detail;
      e["count"] = x.count;
      e["backtrace"] = x.backtrace;
      d.push_back(e);
    }
    j["framework_deviations"] = d;
  }
  if (r.fusion) {
    J f;
    f["mode"] = to_string(r.fusion->mode);
    f["unfused_lb_us"] = r.fusion->unfused_lb_us;
    f["fused_lb_us"] = r.fusion->fused_lb_us;
    f["profit_us"] = r.fusion->profit_us();
    f["profit_ratio"] = r.fusion->profit_ratio();
    f["fusable_sites"] = r.fusion->fusable_sites;
    f["fusable_layers"] = r.fusion->fusable_layers;
    f["total_layers"] = r.fusion->total_layers;
    J sites = J::array();
    for (const auto& a : r.fusion->applied) {
      J s;
      s["pattern"] = a.site.fused_key;
      s["head"] = g.nodes()[a.site.members[0]].id;
      s["member_sum_us"] = a.member_sum_us;
      s["fused_us"] = a.fused_us;
      s["profit_us"] = a.profit_us();
      sites.push_back(s);
    }
    f["applied"] = sites;
    j["fusion"] = f;
  }
  if (r.tensor_core) {
    J t;
    t["mode"] = to_string(r.tensor_core->mode);
    t["layout"] = to_string(r.tensor_core->layout);
    t["f32_lb_us"] = r.tensor_core->f32_lb_us;
    t["f16_lb_us"] = r.tensor_core->f16_lb_us;
    t["speedup"] = r.tensor_core->speedup();
    t["tc_used_in_profile"] = r.tensor_core->tc_used_in_profile ? J(*r.tensor_core->tc_used_in_profile) : J();
    j["tensor_core"] = t;
  }
  if (r.joint) {
    J s;
    s["scenario"] = r.joint->scenario.name();
    s["dtype"] = to_string(r.joint->dtype);
    s["lb_us"] = r.joint->lb_us;
    s["measured_us"] = detail::opt_num(r.joint->measured_us);
    s["speedup"] = detail::opt_num(r.joint->speedup);
    s["fusions_applied"] = r.joint->fusions_applied;
    s["logged_algorithms"] = r.joint->used_logged_algorithms;
    j["joint"] = s;
  }
  j["warnings"] = r.warnings;
  return j;
}

inline std::string report_structured(const AnalysisReport& r) { return report_to_json(r).dump(2) + "\n"; }

inline std::string report_text(const AnalysisReport& r) {
  std::ostringstream o;
  char buf[256];
  o << "model " << r.model << " on " << r.system << " (" << to_string(r.dtype) << ", batch " << r.batch << ")\n";
  o << "lower bound, sequential: " << format_ms(r.lb_sequential_us) << " ms\n";
  o << "lower bound, parallel:   " << format_ms(r.lb_parallel_us) << " ms\n";
  if (r.measured_ms) {
    o << "measured:                " << format_ms(*r.measured_ms * 1000.0) << " ms\n";
    if (r.br_sequential) {
      std::snprintf(buf, sizeof(buf), "Benanza ratio, sequential: %.3f (potential speedup %.2fx)\n",
                    r.br_sequential->br, r.br_sequential->speedup);
      o << buf;
    }
    if (r.br_parallel) {
      std::snprintf(buf, sizeof(buf), "Benanza ratio, parallel:   %.3f (potential speedup %.2fx)\n", r.br_parallel->br,
                    r.br_parallel->speedup);
      o << buf;
    }
  }
  o << "critical path (" << r.path.nodes.size() << " layers):";
  for (const auto& id : r.path.nodes) o << " " << id;
  o << "\n\n";
  std::snprintf(buf, sizeof(buf), "%-32s %-18s %12s  %s\n", "layer", "type", "latency ms", "algorithm");
  o << buf;
  const auto& g = r.annotated.graph;
  for (auto i : topo_indices(g)) {
    const auto& k = r.annotated.chosen[i];
    std::snprintf(buf, sizeof(buf), "%-32s %-18s %12s  %s\n", g.nodes()[i].id.c_str(), to_string(g.nodes()[i].op_type),
                  format_ms(r.annotated.latency_us[i]).c_str(), k && k->algorithm ? to_string(*k->algorithm) : "-");
    o << buf;
  }
  if (r.algorithm) {
    std::snprintf(buf, sizeof(buf), "\nconvolution algorithms: %zu sub-optimal, aggregate speedup %.3fx\n",
                  r.algorithm->entries.size(), r.algorithm->aggregate_speedup);
    o << buf;
    for (const auto& e : r.algorithm->entries) {
      std::snprintf(buf, sizeof(buf), "  %s: %s %s ms, best %s %s ms (%.2fx)\n", e.node_id.c_str(),
                    e.logged ? to_string(*e.logged) : "?", format_ms(*e.chosen_us).c_str(),
                    e.ideal ? to_string(*e.ideal) : "?", format_ms(e.ideal_us).c_str(), e.ratio());
      o << buf;
    }
    for (const auto& e : r.algorithm->unknown) o << "  " << e.node_id << ": logged algorithm not in database\n";
  }
  if (r.deviations) {
    o << "\nframework deviations: " << r.deviations->size() << "\n";
    for (const auto& d : *r.deviations) {
      o << "  " << to_string(d.kind) << " " << d.name;
      if (d.seq) o << " @" << *d.seq;
      if (!d.node_id.empty()) o << " [" << d.node_id << "]";
      if (d.count > 1) o << " x" << d.count;
      o << ": " << d.detail << "\n";
      for (const auto& f : d.backtrace) o << "      at " << f << "\n";
    }
  }
  if (r.fusion) {
    std::snprintf(buf, sizeof(buf), "\nfusion: %zu fusable layers of %zu, %zu sites fused; %s ms -> %s ms (%.3fx)\n",
                  r.fusion->fusable_layers, r.fusion->total_layers, r.fusion->applied.size(),
                  format_ms(r.fusion->unfused_lb_us).c_str(), format_ms(r.fusion->fused_lb_us).c_str(),
                  r.fusion->profit_ratio());
    o << buf;
  }
  if (r.tensor_core) {
    std::snprintf(buf, sizeof(buf), "\ntensor cores: f32 %s ms, f16 %s ms (%.3fx)", format_ms(r.tensor_core->f32_lb_us).c_str(),
                  format_ms(r.tensor_core->f16_lb_us).c_str(), r.tensor_core->speedup());
    o << buf;
    if (r.tensor_core->tc_used_in_profile) o << "; profile " << (*r.tensor_core->tc_used_in_profile ? "uses" : "does not use") << " tensor-core kernels";
    o << "\n";
  }
  if (r.joint) {
    o << "\nscenario " << r.joint->scenario.name() << ": " << format_ms(r.joint->lb_us) << " ms";
    if (r.joint->speedup) {
      std::snprintf(buf, sizeof(buf), " (%.2fx vs measured)", *r.joint->speedup);
      o << buf;
    }
    o << "\n";
  }
  for (const auto& w : r.warnings) o << "warning: " << w << "\n";
  return o.str();
}

namespace detail {

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace detail

inline std::string report_dot(const LatencyAnnotatedGraph& a, const CriticalPath& cp) {
  const auto& g = a.graph;
  std::set<std::string> on_path(cp.nodes.begin(), cp.nodes.end());
  std::set<std::pair<std::string, std::string>> path_edges;
  for (std::size_t k = 1; k < cp.nodes.size(); ++k) path_edges.insert({cp.nodes[k - 1], cp.nodes[k]});
  std::ostringstream o;
  o << "digraph \"" << detail::dot_escape(g.name()) << "\" {\n";
  o << "  node [shape=box, fontname=\"Helvetica\"];\n";
  for (auto i : topo_indices(g)) {
    const auto& n = g.nodes()[i];
    o << "  \"" << detail::dot_escape(n.id) << "\" [label=\"" << detail::dot_escape(n.id) << "\\n"
      << to_string(n.op_type) << "\\n" << format_ms(a.latency_us[i]) << " ms\"";
    if (on_path.count(n.id)) o << ", color=red, fontcolor=red";
    o << "];\n";
  }
  for (auto i : topo_indices(g))
    for (auto s : g.succs(i)) {
      const auto& u = g.nodes()[i].id;
      const auto& v = g.nodes()[s].id;
      o << "  \"" << detail::dot_escape(u) << "\" -> \"" << detail::dot_escape(v) << "\"";
      if (path_edges.count({u, v})) o << " [color=red, penwidth=2]";
      o << ";\n";
    }
  o << "}\n";
  return o.str();
}

}  // namespace lbound
