// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "lbound/benchgen.hpp"
#include "lbound/synth_runner.hpp"
#include "support/models.hpp"

using namespace lbound;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("lbound_db_" + std::to_string(rd()) + std::to_string(::getpid()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

LayerSignature conv_sig() {
  auto g = infer_shapes(parse_text_graph("input x Nx16x14x14\ninit w 16x16x3x3\n"
                                         "node c Conv inputs=x,w attrs=kernel_shape=3,3;pads=1,1,1,1\n"),
                        1);
  return signature(g.node("c"), DType::f32);
}

PerfRecord rec(const LayerSignature& sig, std::optional<ConvAlgorithm> a, double us, Layout l = Layout::NCHW,
               std::optional<std::string> fused = std::nullopt) {
  PerfRecord r;
  r.key = make_key("Tesla_V100", sig, a, l, std::move(fused));
  r.latency_us = us;
  return r;
}

PerfRecord unsupported(const LayerSignature& sig, ConvAlgorithm a) {
  PerfRecord r;
  r.key = make_key("Tesla_V100", sig, a, Layout::NCHW, std::nullopt);
  r.status = RecordStatus::unsupported;
  return r;
}

PerfRecord rich(const LayerSignature& sig) {
  auto r = rec(sig, ConvAlgorithm::WING, 12.3456789012345);
  r.metadata.kernels = {"volta_h884cudnn_128x128", "k2"};
  r.metadata.metrics = {{"flops", 1e9}, {"dram_bytes", 3.5}};
  r.source = RecordSource::imported;
  r.stack = "cudnn 7.6 / cuda 10.1";
  return r;
}

}  // namespace

TEST(PerfDb, InsertQueryRoundTripInMemory) {
  auto sig = conv_sig();
  auto db = PerfDb::in_memory();
  auto r = rich(sig);
  db.insert(r);
  auto q = db.query("Tesla_V100", DType::f32, sig);
  ASSERT_EQ(q.hits.size(), 1u);
  EXPECT_TRUE(q.misses.empty());
  EXPECT_TRUE(q.hits[0].same_content(r));
  EXPECT_FALSE(q.hits[0].timestamp.empty());
}

TEST(PerfDb, JsonRecordRoundTripIsByteFaithful) {
  auto sig = conv_sig();
  for (auto r : {rich(sig), rec(sig, std::nullopt, 1.0 / 3.0), unsupported(sig, ConvAlgorithm::FFT),
                 rec(sig, ConvAlgorithm::IPGEMM, 7.25, Layout::NHWC, "conv_bias_act:Relu")}) {
    r.key.hash = sig.hash64;
    r.timestamp = "2024-01-02T03:04:05Z";
    auto text = record_to_json(r).dump();
    auto back = record_from_json(nlohmann::json::parse(text));
    EXPECT_TRUE(back.same_content(r));
    EXPECT_EQ(back.timestamp, r.timestamp);
    EXPECT_EQ(record_to_json(back).dump(), text);
  }
}

TEST(PerfDb, PersistsAcrossReopen) {
  TempDir dir;
  auto path = dir.file("db.jsonl");
  auto sig = conv_sig();
  std::vector<PerfRecord> written;
  {
    auto db = PerfDb::open(path);
    for (auto a : kAllConvAlgorithms) {
      written.push_back(rec(sig, a, 10.0 + static_cast<int>(a)));
      db.insert(written.back());
    }
    db.insert(rich(sig.with_dtype(DType::f16)));
  }
  auto db = PerfDb::open(path, PerfDb::Mode::read_only);
  auto q = db.query("Tesla_V100", DType::f32, sig);
  ASSERT_EQ(q.hits.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_TRUE(q.hits[i].same_content(written[i])) << i;
  EXPECT_EQ(db.size(), 9u);
  EXPECT_THROW(db.insert(rec(sig, std::nullopt, 1)), Error);
}

TEST(PerfDb, LastWriteWinsWithAuditTrail) {
  TempDir dir;
  auto path = dir.file("db.jsonl");
  auto sig = conv_sig();
  {
    auto db = PerfDb::open(path);
    db.insert(rec(sig, ConvAlgorithm::GEMM, 10));
    db.insert(rec(sig, ConvAlgorithm::GEMM, 11));
    db.insert(rec(sig, ConvAlgorithm::GEMM, 12));
    db.insert(rec(sig, ConvAlgorithm::IGEMM, 5));
    EXPECT_EQ(db.audit_log().size(), 2u);
    EXPECT_EQ(*db.find(make_key("Tesla_V100", sig, ConvAlgorithm::GEMM, Layout::NCHW, std::nullopt))->latency_us, 12);
  }
  auto db = PerfDb::open(path);
  EXPECT_EQ(db.size(), 2u);
  ASSERT_EQ(db.audit_log().size(), 2u);
  EXPECT_EQ(*db.audit_log()[0].latency_us, 10);
  EXPECT_EQ(*db.audit_log()[1].latency_us, 11);

  db.compact();
  EXPECT_TRUE(fs::exists(path + ".audit"));
  std::size_t lines = 0;
  {
    std::ifstream in(path);
    for (std::string l; std::getline(in, l);) ++lines;
  }
  EXPECT_EQ(lines, 3u);  // header + two current records
  db.insert(rec(sig, ConvAlgorithm::IGEMM, 6));
  db.compact();
  auto reopened = PerfDb::open(path, PerfDb::Mode::read_only);
  EXPECT_EQ(reopened.size(), 2u);
  ASSERT_EQ(reopened.audit_log().size(), 3u);
  EXPECT_EQ(*reopened.audit_log()[2].latency_us, 5);
}

TEST(PerfDb, SingleWriterLock) {
  TempDir dir;
  auto path = dir.file("db.jsonl");
  auto writer = PerfDb::open(path);
  try {
    PerfDb::open(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::storage);
    EXPECT_NE(std::string(e.what()).find("locked"), std::string::npos);
  }
  EXPECT_NO_THROW(PerfDb::open(path, PerfDb::Mode::read_only));
  writer.compact();
  EXPECT_THROW(PerfDb::open(path), Error);
}

TEST(PerfDb, StorageErrors) {
  TempDir dir;
  auto kind = [](const std::function<void()>& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::usage;
  };
  EXPECT_EQ(kind([&] { PerfDb::open(dir.file("missing.jsonl"), PerfDb::Mode::read_only); }), ErrorKind::storage);
  EXPECT_EQ(kind([&] { PerfDb::open(dir.file("no/such/dir/db.jsonl")); }), ErrorKind::storage);
  {
    std::ofstream(dir.file("bad.jsonl")) << "{\"lbound_db\":1}\n{broken\n";
  }
  EXPECT_EQ(kind([&] { PerfDb::open(dir.file("bad.jsonl"), PerfDb::Mode::read_only); }), ErrorKind::storage);
  {
    std::ofstream(dir.file("nohdr.jsonl")) << "{\"x\":1}\n";
  }
  EXPECT_EQ(kind([&] { PerfDb::open(dir.file("nohdr.jsonl"), PerfDb::Mode::read_only); }), ErrorKind::storage);
}

TEST(PerfDb, LatencyPresentIffOk) {
  auto db = PerfDb::in_memory();
  auto r = unsupported(conv_sig(), ConvAlgorithm::FFT);
  r.latency_us = 3;
  EXPECT_THROW(db.insert(r), Error);
  auto ok = rec(conv_sig(), ConvAlgorithm::FFT, 1);
  ok.latency_us.reset();
  EXPECT_THROW(db.insert(ok), Error);
}

TEST(PerfDb, QueryMissAtSignatureGranularity) {
  auto sig = conv_sig();
  auto db = PerfDb::in_memory();
  auto q = db.query("Tesla_V100", DType::f32, sig);
  EXPECT_TRUE(q.hits.empty());
  ASSERT_EQ(q.misses.size(), 1u);
  EXPECT_EQ(q.misses[0].canonical, sig.canonical_string);
  EXPECT_EQ(q.misses[0].system, "Tesla_V100");
  for (auto a : {ConvAlgorithm::GEMM, ConvAlgorithm::WING, ConvAlgorithm::FFT}) db.insert(rec(sig, a, 3));
  q = db.query("Tesla_V100", DType::f32, sig);
  EXPECT_EQ(q.hits.size(), 3u);
  EXPECT_TRUE(q.misses.empty());
  EXPECT_EQ(db.query("Tesla_T4", DType::f32, sig).misses.size(), 1u);
  EXPECT_EQ(db.query("Tesla_V100", DType::f16, sig.with_dtype(DType::f16)).misses.size(), 1u);
}

TEST(PerfDb, BestPicksMinimumWithEnumTieBreak) {
  auto sig = conv_sig();
  auto db = PerfDb::in_memory();
  db.insert(rec(sig, ConvAlgorithm::GEMM, 12));
  db.insert(rec(sig, ConvAlgorithm::WING, 10));
  EXPECT_EQ(db.best("Tesla_V100", DType::f32, sig).key.algorithm, ConvAlgorithm::WING);

  auto tie = PerfDb::in_memory();
  tie.insert(rec(sig, ConvAlgorithm::GEMM, 10));
  tie.insert(rec(sig, ConvAlgorithm::IGEMM, 10));
  EXPECT_EQ(tie.best("Tesla_V100", DType::f32, sig).key.algorithm, ConvAlgorithm::IGEMM);

  tie.insert(rec(sig, ConvAlgorithm::IGEMM, 10, Layout::NHWC));
  auto b = tie.best("Tesla_V100", DType::f32, sig);
  EXPECT_EQ(b.key.layout, Layout::NCHW);
  EXPECT_EQ(tie.best("Tesla_V100", DType::f32, sig, {Layout::NHWC}).key.layout, Layout::NHWC);
}

TEST(PerfDb, BestSkipsUnsupportedAndFusedUnlessAsked) {
  auto sig = conv_sig();
  auto db = PerfDb::in_memory();
  db.insert(unsupported(sig, ConvAlgorithm::FFT));
  try {
    db.best("Tesla_V100", DType::f32, sig);
    FAIL();
  } catch (const MissError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::miss);
    ASSERT_EQ(e.misses().size(), 1u);
    EXPECT_EQ(e.misses()[0].canonical, sig.canonical_string);
  }
  EXPECT_EQ(db.query("Tesla_V100", DType::f32, sig).hits.size(), 1u);
  db.insert(rec(sig, ConvAlgorithm::IPGEMM, 1, Layout::NCHW, "conv_bias"));
  db.insert(rec(sig, ConvAlgorithm::IGEMM, 4));
  EXPECT_EQ(*db.best("Tesla_V100", DType::f32, sig).latency_us, 4);
  EXPECT_EQ(*db.best("Tesla_V100", DType::f32, sig, {std::nullopt, "conv_bias"}).latency_us, 1);
  EXPECT_THROW(db.best("Tesla_V100", DType::f32, sig, {std::nullopt, "conv_bias_act:Relu"}), MissError);
}

// best() is a lower bound over every ok hit for random record sets.
TEST(PerfDb, BestIsMinimumProperty) {
  auto sig = conv_sig();
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> lat(1, 100);
  for (int trial = 0; trial < 50; ++trial) {
    auto db = PerfDb::in_memory();
    for (auto a : kAllConvAlgorithms) {
      if (rng() % 4 == 0) db.insert(unsupported(sig, a));
      else db.insert(rec(sig, a, lat(rng)));
    }
    double lo = 1e9;
    for (const auto& r : db.query("Tesla_V100", DType::f32, sig).hits)
      if (r.ok()) lo = std::min(lo, *r.latency_us);
    if (lo == 1e9) continue;
    EXPECT_EQ(*db.best("Tesla_V100", DType::f32, sig).latency_us, lo);
  }
}

TEST(PerfDb, HashCollisionDoesNotAlias) {
  auto sig = conv_sig();
  auto db = PerfDb::in_memory();
  PerfRecord impostor;
  impostor.key = {"Tesla_V100", DType::f32, sig.hash64, "Relu|f32|in=1|", std::nullopt, Layout::NCHW, std::nullopt};
  impostor.latency_us = 1;
  db.insert(impostor);
  auto q = db.query("Tesla_V100", DType::f32, sig);
  EXPECT_TRUE(q.hits.empty());
  db.insert(rec(sig, ConvAlgorithm::GEMM, 3));
  q = db.query("Tesla_V100", DType::f32, sig);
  ASSERT_EQ(q.hits.size(), 1u);
  EXPECT_EQ(q.hits[0].key.canonical, sig.canonical_string);
  EXPECT_EQ(db.query("Tesla_V100", DType::f32, sig.hash64, "Relu|f32|in=1|").hits.size(), 1u);
}

TEST(PerfDb, ImportMarksRecordsImported) {
  TempDir dir;
  auto sig = conv_sig();
  {
    std::ofstream out(dir.file("ext.jsonl"));
    out << PerfDb::header() << "\n\n";
    auto r = rec(sig, ConvAlgorithm::DRCT, 99);
    r.timestamp = "2020-01-01T00:00:00Z";
    out << record_to_json(r).dump() << "\n";
  }
  auto db = PerfDb::open(dir.file("db.jsonl"));
  EXPECT_EQ(db.import_file(dir.file("ext.jsonl")), 1u);
  auto hits = db.query("Tesla_V100", DType::f32, sig).hits;
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].source, RecordSource::imported);
  EXPECT_EQ(hits[0].timestamp, "2020-01-01T00:00:00Z");
  EXPECT_THROW(db.import_file(dir.file("nope.jsonl")), Error);
  {
    std::ofstream(dir.file("bad.jsonl")) << "{\"key\":{}}\n";
  }
  try {
    db.import_file(dir.file("bad.jsonl"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::format);
  }
}

TEST(PerfDb, SimulatedRecordsRoundTripThroughFile) {
  TempDir dir;
  auto path = dir.file("db.jsonl");
  auto specs = generate_specs(unique_layers({fx::resnet_v1(18)}, DType::f32).signatures);
  const auto& sys = *find_system(builtin_systems(), "Tesla_T4");
  std::vector<PerfRecord> recs;
  {
    auto db = PerfDb::open(path);
    for (const auto& s : specs) {
      recs.push_back(simulate(s, sys));
      db.insert(recs.back());
    }
  }
  auto db = PerfDb::open(path, PerfDb::Mode::read_only);
  ASSERT_EQ(db.size(), recs.size());
  for (const auto& r : recs) {
    const auto* got = db.find(r.key);
    ASSERT_TRUE(got);
    EXPECT_TRUE(got->same_content(r));
  }
}
