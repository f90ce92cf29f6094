// SPDX-License-Identifier: Apache-2.0
#pragma once

// Performance database: benchmark results keyed by
// (system, dtype, signature, algorithm, layout, fused pattern).
//
// On disk it is a line-delimited JSON file. The first line is the header
// {"lbound_db":1}; each further line is one record. Inserts append, so a key
// may appear several times: the last occurrence is current and earlier ones
// are the audit trail. `compact()` moves superseded lines to `<path>.audit`
// and rewrites the main file with current records only.

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "lbound/bench_types.hpp"
#include "lbound/dedup.hpp"

namespace lbound {

struct PerfKey {
  std::string system;
  DType dtype = DType::f32;
  std::uint64_t hash = 0;
  std::string canonical;
  std::optional<ConvAlgorithm> algorithm;
  Layout layout = Layout::NCHW;
  std::optional<std::string> fused;

  auto tie() const { return std::tie(system, dtype, hash, canonical, algorithm, layout, fused); }
  bool operator<(const PerfKey& o) const { return tie() < o.tie(); }
  bool operator==(const PerfKey& o) const { return tie() == o.tie(); }

  std::string to_string() const {
    std::string s = system + "/" + lbound::to_string(dtype) + "/" + canonical;
    s += "/" + std::string(algorithm ? lbound::to_string(*algorithm) : "none");
    s += "/" + std::string(lbound::to_string(layout));
    s += "/" + fused.value_or("unfused");
    return s;
  }
};

// Signature-granularity key reported for lookups that found nothing usable.
struct MissKey {
  std::string system;
  DType dtype = DType::f32;
  std::string canonical;
  std::string detail;  // which variant was wanted, if narrower than the signature

  bool operator==(const MissKey& o) const {
    return system == o.system && dtype == o.dtype && canonical == o.canonical && detail == o.detail;
  }
  std::string to_string() const {
    return system + "/" + lbound::to_string(dtype) + "/" + canonical + (detail.empty() ? "" : " (" + detail + ")");
  }
};

class MissError : public Error {
 public:
  explicit MissError(std::vector<MissKey> misses)
      : Error(ErrorKind::miss, describe(misses)), misses_(std::move(misses)) {}

  const std::vector<MissKey>& misses() const { return misses_; }

 private:
  static std::string describe(const std::vector<MissKey>& m) {
    std::string s = std::to_string(m.size()) + " missing benchmark(s)";
    for (std::size_t i = 0; i < m.size() && i < 5; ++i) s += "; " + m[i].to_string();
    if (m.size() > 5) s += "; ...";
    return s;
  }
  std::vector<MissKey> misses_;
};

enum class RecordStatus { ok, unsupported };
enum class RecordSource { simulated, imported };

struct RecordMetadata {
  std::vector<std::string> kernels;
  std::map<std::string, double> metrics;

  bool operator==(const RecordMetadata&) const = default;
  bool empty() const { return kernels.empty() && metrics.empty(); }
};

struct PerfRecord {
  PerfKey key;
  RecordStatus status = RecordStatus::ok;
  std::optional<double> latency_us;  // present iff status == ok
  RecordMetadata metadata;
  RecordSource source = RecordSource::simulated;
  std::string timestamp;
  std::optional<std::string> stack;

  bool ok() const { return status == RecordStatus::ok; }

  bool same_content(const PerfRecord& o) const {
    return key == o.key && status == o.status && latency_us == o.latency_us && metadata == o.metadata &&
           source == o.source && stack == o.stack;
  }
};

inline PerfKey make_key(const std::string& system, const LayerSignature& sig, std::optional<ConvAlgorithm> algo,
                        Layout layout, std::optional<std::string> fused) {
  return {system, sig.dtype, sig.hash64, sig.canonical_string, algo, layout, std::move(fused)};
}

inline nlohmann::ordered_json record_to_json(const PerfRecord& r) {
  nlohmann::ordered_json j;
  j["system"] = r.key.system;
  j["dtype"] = to_string(r.key.dtype);
  j["hash"] = hex64(r.key.hash);
  j["signature"] = r.key.canonical;
  j["algorithm"] = r.key.algorithm ? nlohmann::ordered_json(to_string(*r.key.algorithm)) : nlohmann::ordered_json();
  j["layout"] = to_string(r.key.layout);
  j["fused"] = r.key.fused ? nlohmann::ordered_json(*r.key.fused) : nlohmann::ordered_json();
  j["status"] = r.ok() ? "ok" : "unsupported";
  j["latency_us"] = r.latency_us ? nlohmann::ordered_json(*r.latency_us) : nlohmann::ordered_json();
  j["source"] = r.source == RecordSource::simulated ? "simulated" : "imported";
  j["timestamp"] = r.timestamp;
  if (r.stack) j["stack"] = *r.stack;
  if (!r.metadata.empty()) {
    nlohmann::ordered_json m;
    m["kernels"] = r.metadata.kernels;
    nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.metadata.metrics) metrics[k] = v;
    m["metrics"] = metrics;
    j["metadata"] = m;
  }
  return j;
}

inline PerfRecord record_from_json(const nlohmann::json& j) {
  auto fail = [](const std::string& m) -> PerfRecord { throw Error(ErrorKind::format, "bad record: " + m); };
  try {
    PerfRecord r;
    r.key.system = j.at("system").get<std::string>();
    r.key.dtype = parse_dtype(j.at("dtype").get<std::string>());
    r.key.canonical = j.at("signature").get<std::string>();
    auto hash = j.value("hash", std::string());
    r.key.hash = hash.empty() ? fnv1a64(r.key.canonical) : std::stoull(hash, nullptr, 16);
    if (!j.at("algorithm").is_null()) {
      auto a = parse_algorithm(j.at("algorithm").get<std::string>());
      if (!a) return fail("unknown algorithm");
      r.key.algorithm = *a;
    }
    r.key.layout = parse_layout(j.value("layout", std::string("NCHW")));
    if (j.contains("fused") && !j.at("fused").is_null()) r.key.fused = j.at("fused").get<std::string>();
    auto status = j.at("status").get<std::string>();
    if (status == "ok") r.status = RecordStatus::ok;
    else if (status == "unsupported") r.status = RecordStatus::unsupported;
    else return fail("unknown status '" + status + "'");
    if (j.contains("latency_us") && !j.at("latency_us").is_null()) r.latency_us = j.at("latency_us").get<double>();
    if (r.ok() && (!r.latency_us || !(*r.latency_us > 0))) return fail("ok record needs a positive latency");
    if (!r.ok() && r.latency_us) return fail("unsupported record carries a latency");
    auto source = j.value("source", std::string("imported"));
    r.source = source == "simulated" ? RecordSource::simulated : RecordSource::imported;
    r.timestamp = j.value("timestamp", std::string());
    if (j.contains("stack")) r.stack = j.at("stack").get<std::string>();
    if (j.contains("metadata")) {
      const auto& m = j.at("metadata");
      if (m.contains("kernels")) r.metadata.kernels = m.at("kernels").get<std::vector<std::string>>();
      if (m.contains("metrics"))
        for (auto it = m.at("metrics").begin(); it != m.at("metrics").end(); ++it)
          r.metadata.metrics[it.key()] = it.value().get<double>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    return fail(e.what());
  }
}

struct QueryResult {
  std::vector<PerfRecord> hits;
  std::vector<MissKey> misses;
};

// Restricts best(): layout unset = any; fused unset = unfused records only.
struct BestFilter {
  std::optional<Layout> layout;
  std::optional<std::string> fused;
  std::optional<ConvAlgorithm> algorithm;
};

class PerfDb {
 public:
  enum class Mode { read_only, read_write };

  PerfDb() = default;

  static PerfDb in_memory() { return PerfDb(); }

  // Opens (creating in read_write mode) the database file. The writer takes an
  // exclusive advisory lock for the lifetime of the object.
  static PerfDb open(const std::string& path, Mode mode = Mode::read_write) {
    PerfDb db;
    db.path_ = path;
    if (mode == Mode::read_write) {
      int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
      if (fd < 0) storage_fail("cannot open '" + path + "': " + std::strerror(errno));
      if (::flock(fd, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd);
        storage_fail("database '" + path + "' is locked by another writer");
      }
      db.writer_ = std::make_shared<Fd>(fd);
    }
    db.load_audit_file();
    db.load_main_file(mode == Mode::read_write);
    return db;
  }

  const std::string& path() const { return path_; }
  bool writable() const { return path_.empty() || writer_ != nullptr; }

  void insert(PerfRecord r) {
    if (!writable()) storage_fail("database opened read-only");
    if (r.ok() != r.latency_us.has_value()) throw Error(ErrorKind::state, "latency present iff status ok");
    if (r.key.hash == 0) r.key.hash = fnv1a64(r.key.canonical);
    if (r.timestamp.empty()) r.timestamp = utc_timestamp();
    if (writer_) append_line(record_to_json(r).dump() + "\n");
    apply(std::move(r));
  }

  const PerfRecord* find(const PerfKey& key) const {
    auto it = records_.find(key);
    return it == records_.end() ? nullptr : &it->second;
  }
  bool contains(const PerfKey& key) const { return find(key) != nullptr; }

  // All variants recorded for (system, dtype, signature).
  QueryResult query(const std::string& system, DType dt, const LayerSignature& sig) const {
    return query(system, dt, sig.hash64, sig.canonical_string);
  }

  QueryResult query(const std::string& system, DType dt, std::uint64_t hash, const std::string& canonical) const {
    QueryResult q;
    PerfKey lo{system, dt, hash, canonical, std::nullopt, Layout::NCHW, std::nullopt};
    for (auto it = records_.lower_bound(lo); it != records_.end(); ++it) {
      const auto& k = it->first;
      if (k.system != system || k.dtype != dt || k.hash != hash) break;
      if (k.canonical != canonical) {
        if (k.canonical > canonical) break;
        continue;
      }
      q.hits.push_back(it->second);
    }
    if (q.hits.empty()) q.misses.push_back({system, dt, canonical, ""});
    return q;
  }

  // Lowest-latency ok record; ties go to algorithm enum order, then NCHW.
  PerfRecord best(const std::string& system, DType dt, const LayerSignature& sig, const BestFilter& f = {}) const {
    auto q = query(system, dt, sig);
    const PerfRecord* best = nullptr;
    for (const auto& r : q.hits) {
      if (!r.ok()) continue;
      if (f.layout && r.key.layout != *f.layout) continue;
      if (r.key.fused != f.fused) continue;
      if (f.algorithm && r.key.algorithm != f.algorithm) continue;
      if (!best || *r.latency_us < *best->latency_us) best = &r;  // hits are key-ordered, so ties keep the first
    }
    if (!best) {
      std::string detail;
      if (f.layout) detail += std::string("layout=") + to_string(*f.layout);
      if (f.fused) detail += (detail.empty() ? "" : ",") + std::string("fused=") + *f.fused;
      if (f.algorithm) detail += (detail.empty() ? "" : ",") + std::string("algorithm=") + to_string(*f.algorithm);
      throw MissError({{system, dt, sig.canonical_string, detail}});
    }
    return *best;
  }

  std::size_t size() const { return records_.size(); }
  const std::vector<PerfRecord>& audit_log() const { return audit_; }

  std::vector<PerfRecord> records() const {
    std::vector<PerfRecord> out;
    for (const auto& [_, r] : records_) out.push_back(r);
    return out;
  }

  // Rewrites the file with current records only; superseded ones go to the
  // audit file first so the trail is never lost.
  void compact() {
    if (path_.empty()) return;
    if (!writer_) storage_fail("database opened read-only");
    std::string audit_text;
    for (std::size_t i = audit_on_disk_; i < audit_.size(); ++i) audit_text += record_to_json(audit_[i]).dump() + "\n";
    if (!audit_text.empty()) {
      std::ofstream a(path_ + ".audit", std::ios::app);
      a << audit_text;
      if (!a) storage_fail("cannot write audit file");
      audit_on_disk_ = audit_.size();
    }
    auto tmp = path_ + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << header() << "\n";
      for (const auto& [_, r] : records_) out << record_to_json(r).dump() << "\n";
      if (!out) storage_fail("cannot write '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path_.c_str()) != 0) storage_fail("cannot replace '" + path_ + "'");
    // The lock lives on the old inode; re-acquire on the new file.
    int fd = ::open(path_.c_str(), O_RDWR | O_APPEND | O_CLOEXEC);
    if (fd < 0 || ::flock(fd, LOCK_EX | LOCK_NB) != 0) storage_fail("cannot relock '" + path_ + "'");
    writer_ = std::make_shared<Fd>(fd);
  }

  // Loads records from an external file in the same record format (header
  // optional) and inserts them as imported results. Returns the count.
  std::size_t import_file(const std::string& file) {
    std::ifstream in(file);
    if (!in) storage_fail("cannot open '" + file + "'");
    std::string line;
    std::size_t n = 0, lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::format, file + ":" + std::to_string(lineno) + ": " + e.what());
      }
      if (j.contains("lbound_db")) continue;
      auto r = record_from_json(j);
      r.source = RecordSource::imported;
      insert(std::move(r));
      ++n;
    }
    return n;
  }

  static std::string header() { return R"({"lbound_db":1})"; }

 private:
  struct Fd {
    explicit Fd(int f) : fd(f) {}
    ~Fd() {
      if (fd >= 0) ::close(fd);
    }
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    int fd;
  };

  [[noreturn]] static void storage_fail(const std::string& msg) { throw Error(ErrorKind::storage, msg); }

  void apply(PerfRecord r) {
    auto it = records_.find(r.key);
    if (it != records_.end()) {
      audit_.push_back(std::move(it->second));
      it->second = std::move(r);
    } else {
      auto key = r.key;
      records_.emplace(std::move(key), std::move(r));
    }
  }

  void append_line(const std::string& line) {
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
      auto n = ::write(writer_->fd, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        storage_fail("write to '" + path_ + "' failed: " + std::strerror(errno));
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
  }

  void load_audit_file() {
    std::ifstream in(path_ + ".audit");
    if (!in) return;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      try {
        audit_.push_back(record_from_json(nlohmann::json::parse(line)));
      } catch (const std::exception& e) {
        storage_fail(path_ + ".audit:" + std::to_string(lineno) + ": " + e.what());
      }
    }
    audit_on_disk_ = audit_.size();
  }

  void load_main_file(bool create_header) {
    std::ifstream in(path_);
    if (!in) {
      if (!create_header) storage_fail("cannot open '" + path_ + "'");
      return;
    }
    std::string line;
    std::size_t lineno = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        storage_fail(path_ + ":" + std::to_string(lineno) + ": " + e.what());
      }
      if (!saw_header) {
        if (!j.contains("lbound_db")) storage_fail(path_ + ": missing database header");
        if (j.at("lbound_db") != 1) storage_fail(path_ + ": unsupported database version");
        saw_header = true;
        continue;
      }
      try {
        apply(record_from_json(j));
      } catch (const Error& e) {
        storage_fail(path_ + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    if (!saw_header && create_header) append_line(header() + "\n");
  }

  std::string path_;
  std::shared_ptr<Fd> writer_;
  std::map<PerfKey, PerfRecord> records_;
  std::vector<PerfRecord> audit_;
  std::size_t audit_on_disk_ = 0;
};

}  // namespace lbound
