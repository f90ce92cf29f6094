// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lbound/analyzer.hpp"
#include "lbound/synth_runner.hpp"
#include "lbound/text_graph.hpp"

namespace lbound::cli {

enum ExitCode { ok = 0, input_error = 2, db_miss = 3, storage_error = 4 };

inline int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::miss: return db_miss;
    case ErrorKind::storage: return storage_error;
    default: return input_error;
  }
}

namespace detail {

inline void write_output(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty()) {
    out << content;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::config, "cannot write '" + path + "'");
  f << content;
}

inline ModelGraph load_inferred(const std::string& path, std::int64_t batch) {
  auto g = load_model_file(path);
  if (g.name().empty() || g.name() == "model") {
    auto stem = std::filesystem::path(path).stem().string();
    g = ModelGraph::build(stem, g.nodes(), g.graph_inputs(),
                          [&] {
                            std::vector<Initializer> v;
                            for (const auto& [_, i] : g.initializers()) v.push_back(i);
                            return v;
                          }(),
                          g.graph_outputs());
  }
  return infer_shapes(g, batch);
}

inline std::string resolve_db(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("LBOUND_DB"); env && *env) return env;
  throw Error(ErrorKind::usage, "no database given (use --db or set LBOUND_DB)");
}

inline std::vector<SystemProfile> systems_from(const std::string& profile_file) {
  return profile_file.empty() ? builtin_systems() : load_system_profiles(profile_file);
}

inline const SystemProfile& require_system(const std::vector<SystemProfile>& all, const std::string& id) {
  const auto* s = find_system(all, id);
  if (!s) {
    std::string known;
    for (const auto& x : all) known += (known.empty() ? "" : ", ") + x.system_id;
    throw Error(ErrorKind::config, "unknown system '" + id + "' (known: " + known + ")");
  }
  return *s;
}

inline std::string misses_jsonl(const std::vector<MissKey>& misses) {
  std::string out;
  for (const auto& m : misses) {
    nlohmann::ordered_json j;
    j["system"] = m.system;
    j["dtype"] = to_string(m.dtype);
    j["signature"] = m.canonical;
    j["detail"] = m.detail;
    out += j.dump() + "\n";
  }
  return out;
}

inline std::vector<MissKey> parse_misses(std::string_view text) {
  std::vector<MissKey> out;
  for (const auto& line : split(text, '\n')) {
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("system").get<std::string>(), parse_dtype(j.at("dtype").get<std::string>()),
                     j.at("signature").get<std::string>(), j.value("detail", std::string())});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::format, std::string("bad miss record: ") + e.what());
    }
  }
  return out;
}

inline std::vector<DType> parse_dtypes(const std::vector<std::string>& v) {
  std::vector<DType> out;
  for (const auto& s : v) out.push_back(parse_dtype(s));
  return out;
}

inline std::vector<Layout> parse_layouts(const std::vector<std::string>& v) {
  std::vector<Layout> out;
  for (const auto& s : v) out.push_back(parse_layout(s));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct ProcessArgs {
  std::vector<std::string> models;
  std::int64_t batch = 1;
  std::string format = "text";
  std::string out;
  bool coverage = false;
};

inline int cmd_process(const ProcessArgs& a, std::ostream& out, std::ostream&) {
  if (a.models.empty()) throw Error(ErrorKind::usage, "process needs at least one model");
  if (a.format != "text" && a.format != "structured") throw Error(ErrorKind::usage, "unknown format '" + a.format + "'");
  std::vector<ModelGraph> models;
  for (const auto& p : a.models) models.push_back(detail::load_inferred(p, a.batch));
  auto u = unique_layers(models, DType::f32);
  std::string content;
  if (a.format == "structured") {
    content = dedup_stats_jsonl(u);
    if (a.coverage)
      for (const auto& m : models) {
        auto c = support_coverage(m);
        nlohmann::ordered_json j;
        j["model"] = m.name();
        j["layers"] = c.total;
        j["supported"] = c.supported;
        j["supported_percent"] = c.percent;
        nlohmann::ordered_json ops = nlohmann::ordered_json::array();
        for (const auto& e : c.breakdown) {
          nlohmann::ordered_json o;
          o["op"] = e.op;
          o["count"] = e.count;
          o["supported"] = e.supported;
          o["percent"] = e.percent;
          ops.push_back(o);
        }
        j["ops"] = ops;
        content += j.dump() + "\n";
      }
  } else {
    std::ostringstream o;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-28s %8s %8s %8s\n", "model", "layers", "unique", "unique%");
    o << buf;
    auto row = [&](const ModelDedupStats& s) {
      std::snprintf(buf, sizeof(buf), "%-28s %8zu %8zu %7.1f%%\n", s.model.c_str(), s.total, s.unique, s.percent);
      o << buf;
    };
    for (const auto& s : u.per_model) row(s);
    row(u.pooled);
    if (a.coverage)
      for (const auto& m : models) {
        auto c = support_coverage(m);
        std::snprintf(buf, sizeof(buf), "\n%s: %zu of %zu layers supported (%.1f%%)\n", m.name().c_str(), c.supported,
                      c.total, c.percent);
        o << buf;
        for (const auto& e : c.breakdown) {
          std::snprintf(buf, sizeof(buf), "  %-24s %6zu %6.1f%% %s\n", e.op.c_str(), e.count, e.percent,
                        e.supported ? "" : "(unsupported)");
          o << buf;
        }
      }
    content = o.str();
  }
  detail::write_output(a.out, content, out);
  return ok;
}

struct BenchArgs {
  std::vector<std::string> models;
  std::string manifest;
  std::string from_misses;
  std::int64_t batch = 1;
  std::string system;
  std::string system_profile;
  std::string db;
  bool delta = false;
  bool simulate = false;
  std::string emit_src;
  std::string write_manifest;
  bool fusion = false;
  std::vector<std::string> dtypes{"f32", "f16"};
  std::vector<std::string> layouts{"NCHW"};
  std::optional<std::uint64_t> jitter_seed;
};

inline int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream&) {
  int sources = !a.models.empty() + !a.manifest.empty() + !a.from_misses.empty();
  if (sources != 1) throw Error(ErrorKind::usage, "bench needs exactly one of: models, --manifest, --from-misses");
  if (a.simulate && !a.emit_src.empty()) throw Error(ErrorKind::usage, "--simulate and --emit-src are exclusive");
  if (!a.simulate && a.emit_src.empty() && a.write_manifest.empty())
    throw Error(ErrorKind::usage, "bench needs --simulate, --emit-src or --write-manifest");

  GenerateConfig config;
  config.dtypes = detail::parse_dtypes(a.dtypes);
  config.layouts = detail::parse_layouts(a.layouts);
  config.enable_fusion = a.fusion;

  std::vector<BenchmarkSpec> specs;
  if (!a.manifest.empty()) {
    specs = parse_manifest(read_file(a.manifest));
  } else if (!a.from_misses.empty()) {
    std::map<DType, std::set<LayerSignature>> by_dtype;
    for (const auto& m : detail::parse_misses(read_file(a.from_misses))) by_dtype[m.dtype].insert(parse_signature(m.canonical));
    for (const auto& [dt, sigs] : by_dtype) {
      auto c = config;
      c.dtypes = {dt};
      c.enable_fusion = false;
      auto more = generate_specs({sigs.begin(), sigs.end()}, c);
      specs.insert(specs.end(), more.begin(), more.end());
    }
  } else {
    std::vector<ModelGraph> models;
    for (const auto& p : a.models) models.push_back(detail::load_inferred(p, a.batch));
    auto u = unique_layers(models, DType::f32);
    auto fusion = a.fusion ? fusion_candidates(models, DType::f32) : std::vector<FusionCandidate>{};
    specs = generate_specs(u.signatures, fusion, config);
  }
  std::size_t generated = specs.size();

  std::optional<PerfDb> db;
  bool need_db = a.simulate || a.delta;
  if (need_db) {
    if (a.system.empty()) throw Error(ErrorKind::usage, "--system is required with --simulate or --delta");
    db = PerfDb::open(detail::resolve_db(a.db), a.simulate ? PerfDb::Mode::read_write : PerfDb::Mode::read_only);
  }
  if (a.delta) specs = delta_specs(specs, *db, a.system);
  if (!a.write_manifest.empty()) detail::write_output(a.write_manifest, write_manifest(specs), out);

  if (a.simulate) {
    auto systems = detail::systems_from(a.system_profile);
    const auto& sys = detail::require_system(systems, a.system);
    std::size_t unsupported = 0;
    for (const auto& s : specs) {
      auto r = simulate(s, sys, {a.jitter_seed});
      if (!r.ok()) ++unsupported;
      db->insert(std::move(r));
    }
    out << "generated " << generated << " specs, simulated " << specs.size() << " (" << unsupported
        << " unsupported) on " << a.system << "; database has " << db->size() << " records\n";
  } else if (!a.emit_src.empty()) {
    std::filesystem::create_directories(a.emit_src);
    for (const auto& s : specs) {
      auto path = std::filesystem::path(a.emit_src) / source_file_name(s);
      std::ofstream f(path, std::ios::binary);
      if (!f) throw Error(ErrorKind::generation, "cannot write '" + path.string() + "'");
      f << emit_benchmark_source(s);
    }
    out << "emitted " << specs.size() << " benchmark sources to " << a.emit_src << "\n";
  } else {
    out << "wrote " << specs.size() << " specs to " << a.write_manifest << "\n";
  }
  return ok;
}

struct DbArgs {
  std::string action;
  std::string db;
  std::string file;
  std::string system;
  std::string dtype = "f32";
  std::string signature;
};

inline int cmd_db(const DbArgs& a, std::ostream& out, std::ostream&) {
  auto path = detail::resolve_db(a.db);
  if (a.action == "import") {
    auto db = PerfDb::open(path);
    auto n = db.import_file(a.file);
    out << "imported " << n << " records; database has " << db.size() << " records\n";
  } else if (a.action == "compact") {
    auto db = PerfDb::open(path);
    auto superseded = db.audit_log().size();
    db.compact();
    out << "compacted to " << db.size() << " records (" << superseded << " superseded records in audit log)\n";
  } else if (a.action == "query") {
    auto db = PerfDb::open(path, PerfDb::Mode::read_only);
    auto sig = parse_signature(a.signature);
    auto q = db.query(a.system, parse_dtype(a.dtype), sig);
    for (const auto& r : q.hits) out << record_to_json(r).dump() << "\n";
    if (q.hits.empty()) {
      out << detail::misses_jsonl(q.misses);
      return db_miss;
    }
  } else if (a.action == "stats") {
    auto db = PerfDb::open(path, PerfDb::Mode::read_only);
    std::map<std::pair<std::string, std::string>, std::pair<std::size_t, std::size_t>> by;
    for (const auto& r : db.records()) {
      auto& e = by[{r.key.system, to_string(r.key.dtype)}];
      ++e.first;
      if (!r.ok()) ++e.second;
    }
    out << "records " << db.size() << ", superseded " << db.audit_log().size() << "\n";
    for (const auto& [k, v] : by)
      out << "  " << k.first << " " << k.second << ": " << v.first << " (" << v.second << " unsupported)\n";
  } else {
    throw Error(ErrorKind::usage, "unknown db action '" + a.action + "'");
  }
  return ok;
}

struct ProfileConvertArgs {
  std::string cudnn_log;
  std::string kernels;
  double latency_ms = 0;
  std::string model;
  std::string system;
  std::int64_t batch = 1;
  bool strict = false;
  std::string out;
};

inline int cmd_profile_convert(const ProfileConvertArgs& a, std::ostream& out, std::ostream& err) {
  ConvertInputs in;
  in.cudnn_log = read_file(a.cudnn_log);
  if (!a.kernels.empty()) in.kernel_trace = read_file(a.kernels);
  in.model = a.model;
  in.system_id = a.system;
  in.batch = a.batch;
  in.measured_latency_ms = a.latency_ms;
  in.strict = a.strict;
  std::vector<std::string> warnings;
  auto p = convert_profile(in, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  detail::write_output(a.out, serialize_profile(p), out);
  return ok;
}

struct AnalyzeArgs {
  std::string model;
  std::int64_t batch = 1;
  std::string db;
  std::string system;
  std::string dtype = "f32";
  std::string profile;
  bool parallel = false, ideal_algo = false, fusion = false, tensor_core = false;
  std::string layout = "NCHW";
  bool allow_missing = false;
  std::string format = "text";
  std::string out;
  std::string misses_out;
  std::optional<double> measured_ms;
};

inline int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  if (a.system.empty()) throw Error(ErrorKind::usage, "--system is required");
  if (a.format != "text" && a.format != "structured" && a.format != "dot")
    throw Error(ErrorKind::usage, "unknown format '" + a.format + "'");
  auto g = detail::load_inferred(a.model, a.batch);
  auto db = PerfDb::open(detail::resolve_db(a.db), PerfDb::Mode::read_only);
  std::optional<ExecutionProfile> profile;
  if (!a.profile.empty()) profile = load_profile(a.profile);
  ReportOptions o;
  o.system = a.system;
  o.dtype = parse_dtype(a.dtype);
  o.layout = parse_layout(a.layout);
  o.allow_missing = a.allow_missing;
  o.profile = profile ? &*profile : nullptr;
  o.measured_ms = a.measured_ms;
  o.scenario = {a.parallel, a.ideal_algo, a.fusion, a.tensor_core, o.layout, o.dtype};
  o.fusion_analysis = a.fusion;
  o.tensor_core_analysis = a.tensor_core;
  AnalysisReport r;
  try {
    r = analyze(g, db, o);
  } catch (const MissError& e) {
    err << "error: " << e.misses().size() << " missing database records:\n";
    for (const auto& m : e.misses()) err << "  " << m.to_string() << "\n";
    if (!a.misses_out.empty()) detail::write_output(a.misses_out, detail::misses_jsonl(e.misses()), out);
    return db_miss;
  }
  if (!a.misses_out.empty()) detail::write_output(a.misses_out, detail::misses_jsonl(r.annotated.misses), out);
  std::string content = a.format == "structured" ? report_structured(r)
                        : a.format == "dot"      ? report_dot(r.annotated, r.path)
                                                 : report_text(r);
  detail::write_output(a.out, content, out);
  return ok;
}

struct AdviseArgs {
  std::string model;
  std::int64_t batch = 1;
  std::string db;
  std::vector<std::string> systems;
  std::vector<std::string> costs;  // system=cost per hour
  std::string key = "lb";
  std::string dtype = "f32";
  bool parallel = false;
  std::string format = "text";
};

inline int cmd_advise(const AdviseArgs& a, std::ostream& out, std::ostream&) {
  if (a.systems.empty()) throw Error(ErrorKind::usage, "--systems is required");
  if (a.key != "lb" && a.key != "cost") throw Error(ErrorKind::usage, "--key must be lb or cost");
  std::map<std::string, double> costs;
  for (const auto& c : a.costs) {
    auto eq = c.find('=');
    auto v = eq == std::string::npos ? std::nullopt : parse_double(c.substr(eq + 1));
    if (!v || !(*v > 0)) throw Error(ErrorKind::usage, "bad --cost '" + c + "' (want system=price)");
    costs[c.substr(0, eq)] = *v;
  }
  auto g = detail::load_inferred(a.model, a.batch);
  auto db = PerfDb::open(detail::resolve_db(a.db), PerfDb::Mode::read_only);
  auto rows = advise_systems(g, db, a.systems, parse_dtype(a.dtype), costs,
                             a.key == "cost" ? RankKey::cost : RankKey::lower_bound,
                             a.parallel ? Mode::parallel : Mode::sequential);
  if (a.format == "structured") {
    for (const auto& r : rows) {
      nlohmann::ordered_json j;
      j["system"] = r.system;
      j["lb_us"] = lbound::detail::opt_num(r.lb_us);
      j["cost_score"] = lbound::detail::opt_num(r.cost_score);
      j["flagged"] = r.flagged;
      j["missing"] = r.missing;
      out << j.dump() << "\n";
    }
    return ok;
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-4s %-16s %14s %14s\n", "rank", "system", "lower bound ms", "cost score");
  out << buf;
  std::size_t rank = 0;
  for (const auto& r : rows) {
    std::string lb = r.lb_us ? format_ms(*r.lb_us) : "-";
    std::string cs = r.cost_score ? format_ms(*r.cost_score) : "-";
    std::snprintf(buf, sizeof(buf), "%-4zu %-16s %14s %14s%s\n", ++rank, r.system.c_str(), lb.c_str(), cs.c_str(),
                  r.flagged ? ("  (missing " + std::to_string(r.missing) + " records)").c_str() : "");
    out << buf;
  }
  return ok;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Lower-bound latency analysis for DL models"};
  app.require_subcommand(1);

  ProcessArgs pa;
  auto* process = app.add_subcommand("process", "Find unique layers across models");
  process->add_option("models", pa.models, "Model files (.onnx or text graph)");
  process->add_option("--batch", pa.batch, "Batch size")->check(CLI::PositiveNumber);
  process->add_option("--format", pa.format, "text or structured");
  process->add_option("--out", pa.out, "Write to file instead of stdout");
  process->add_flag("--coverage", pa.coverage, "Also print per-operator support coverage");

  BenchArgs ba;
  std::uint64_t jitter = 0;
  auto* bench = app.add_subcommand("bench", "Generate and run (simulate) layer benchmarks");
  bench->add_option("models", ba.models, "Model files");
  bench->add_option("--manifest", ba.manifest, "Read specs from a manifest instead of models");
  bench->add_option("--from-misses", ba.from_misses, "Read specs from an analyze --misses-out file");
  bench->add_option("--batch", ba.batch, "Batch size")->check(CLI::PositiveNumber);
  bench->add_option("--system", ba.system, "System id");
  bench->add_option("--system-profile", ba.system_profile, "System profile file (default: built-in systems)");
  bench->add_option("--db", ba.db, "Database path (default $LBOUND_DB)");
  bench->add_flag("--delta", ba.delta, "Only specs without a record for the system");
  bench->add_flag("--simulate", ba.simulate, "Run specs through the analytic simulator");
  bench->add_option("--emit-src", ba.emit_src, "Write one benchmark source per spec to this directory");
  bench->add_option("--write-manifest", ba.write_manifest, "Write the spec list as a manifest");
  bench->add_flag("--fusion", ba.fusion, "Also generate fused-layer benchmarks");
  bench->add_option("--dtypes", ba.dtypes, "Data types")->delimiter(',');
  bench->add_option("--layouts", ba.layouts, "Convolution layouts")->delimiter(',');
  auto* jitter_opt = bench->add_option("--jitter", jitter, "Seeded +-3% simulator noise");

  DbArgs da;
  auto* dbc = app.add_subcommand("db", "Database maintenance");
  dbc->require_subcommand(1);
  dbc->add_option("--db", da.db, "Database path (default $LBOUND_DB)");
  auto* db_import = dbc->add_subcommand("import", "Import records from a JSONL file");
  db_import->add_option("file", da.file)->required();
  dbc->add_subcommand("compact", "Rewrite the database, moving superseded records to the audit file");
  dbc->add_subcommand("stats", "Record counts per system and dtype");
  auto* db_query = dbc->add_subcommand("query", "All records for one layer signature");
  db_query->add_option("--system", da.system)->required();
  db_query->add_option("--dtype", da.dtype);
  db_query->add_option("--signature", da.signature)->required();
  for (auto* sub : dbc->get_subcommands({})) sub->add_option("--db", da.db, "Database path");

  ProfileConvertArgs pc;
  auto* prof = app.add_subcommand("profile", "Execution profile tools");
  prof->require_subcommand(1);
  auto* convert = prof->add_subcommand("convert", "Build a profile from a cuDNN/cuBLAS log and kernel trace");
  convert->add_option("--cudnn-log", pc.cudnn_log)->required();
  convert->add_option("--kernels", pc.kernels, "Kernel trace (name TAB duration_us TAB prev,next)");
  convert->add_option("--latency-ms", pc.latency_ms, "Measured model latency")->required();
  convert->add_option("--model", pc.model)->required();
  convert->add_option("--system", pc.system)->required();
  convert->add_option("--batch", pc.batch)->check(CLI::PositiveNumber);
  convert->add_flag("--strict", pc.strict, "Fail on unparseable log blocks");
  convert->add_option("--out", pc.out);

  AnalyzeArgs aa;
  double measured = 0;
  auto* analyze_cmd = app.add_subcommand("analyze", "Lower-bound latency and optimization analyses");
  analyze_cmd->add_option("model", aa.model)->required();
  analyze_cmd->add_option("--batch", aa.batch)->check(CLI::PositiveNumber);
  analyze_cmd->add_option("--db", aa.db, "Database path (default $LBOUND_DB)");
  analyze_cmd->add_option("--system", aa.system)->required();
  analyze_cmd->add_option("--dtype", aa.dtype);
  analyze_cmd->add_option("--profile", aa.profile, "Execution profile");
  analyze_cmd->add_flag("--parallel", aa.parallel);
  analyze_cmd->add_flag("--ideal-algo", aa.ideal_algo);
  analyze_cmd->add_flag("--fusion", aa.fusion);
  analyze_cmd->add_flag("--tensor-core", aa.tensor_core);
  analyze_cmd->add_option("--layout", aa.layout);
  analyze_cmd->add_flag("--allow-missing", aa.allow_missing, "Count missing records as zero");
  analyze_cmd->add_option("--format", aa.format, "text, structured or dot");
  analyze_cmd->add_option("--out", aa.out);
  analyze_cmd->add_option("--misses-out", aa.misses_out, "Write missing records as JSONL");
  auto* measured_opt = analyze_cmd->add_option("--measured-ms", measured, "Measured latency (overrides profile)");

  AdviseArgs va;
  auto* advise = app.add_subcommand("advise", "Rank systems by lower bound or cost");
  advise->add_option("model", va.model)->required();
  advise->add_option("--batch", va.batch)->check(CLI::PositiveNumber);
  advise->add_option("--db", va.db);
  advise->add_option("--systems", va.systems)->delimiter(',')->required();
  advise->add_option("--cost", va.costs, "system=price per hour")->delimiter(',');
  advise->add_option("--key", va.key, "lb or cost");
  advise->add_option("--dtype", va.dtype);
  advise->add_flag("--parallel", va.parallel);
  advise->add_option("--format", va.format);

  std::string systems_out;
  auto* systems = app.add_subcommand("systems", "Print the built-in system profiles");
  systems->add_option("--out", systems_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, oe;
    int rc = app.exit(e, o, oe);
    out << o.str();
    err << oe.str();
    return rc == 0 ? ok : input_error;
  }

  try {
    if (*process) return cmd_process(pa, out, err);
    if (*bench) {
      if (*jitter_opt) ba.jitter_seed = jitter;
      return cmd_bench(ba, out, err);
    }
    if (*dbc) {
      for (const auto* sub : dbc->get_subcommands()) da.action = sub->get_name();
      return cmd_db(da, out, err);
    }
    if (*prof) return cmd_profile_convert(pc, out, err);
    if (*analyze_cmd) {
      if (*measured_opt) aa.measured_ms = measured;
      return cmd_analyze(aa, out, err);
    }
    if (*advise) return cmd_advise(va, out, err);
    if (*systems) {
      detail::write_output(systems_out, write_system_profiles(builtin_systems()), out);
      return ok;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return input_error;
  }
  return input_error;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"lbound"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace lbound::cli
