// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>

#include "json.hpp"
#include "lbound/dedup.hpp"
#include "lbound/text_graph.hpp"
#include "support/models.hpp"

using namespace lbound;

namespace {

std::string data(const std::string& f) { return std::string(LBOUND_TEST_DATA) + "/" + f; }

nlohmann::json expectations(const std::string& name) { return nlohmann::json::parse(read_file(data(name + ".expect.json"))); }

}  // namespace

TEST(Onnx, MixedModelStructure) {
  auto g = load_model_file(data("mixed.onnx"));
  EXPECT_EQ(g.name(), "mixed");
  EXPECT_EQ(g.size(), 17u);
  ASSERT_EQ(g.graph_inputs().size(), 1u);  // initializers are not graph inputs
  EXPECT_EQ(g.graph_inputs()[0].name, "data");
  EXPECT_EQ(g.graph_inputs()[0].dims, (std::vector<std::int64_t>{-1, 3, 32, 32}));
  EXPECT_EQ(g.node("bn").op_type, OpType::BatchNorm);
  EXPECT_EQ(g.node("drop").op_type, OpType::Dropout);
  EXPECT_EQ(g.node("c2").inputs.size(), 3u);
  EXPECT_EQ(g.find_initializer("c1_w")->shape.dims, (std::vector<std::int64_t>{16, 3, 3, 3}));
  EXPECT_EQ(attr_ints(g.node("flat").params, "shape"), (IntList{0, -1}));
  EXPECT_EQ(g.graph_outputs(), std::vector<std::string>{"tanh"});
}

// Shapes and MACs were produced by onnx's reference shape inference.
TEST(Onnx, ShapesAndMacsMatchReferenceInference) {
  auto raw = load_model_file(data("mixed.onnx"));
  auto exp = expectations("mixed");
  for (const auto& batch : {1, 4}) {
    auto g = infer_shapes(raw, batch);
    const auto& e = exp.at(std::to_string(batch));
    std::size_t checked = 0;
    for (const auto& n : g.nodes()) {
      // ONNX tensor name of output 0 is what the expectation file keys on.
      std::string tensor = n.id == "tanh" ? "out" : n.id;
      if (!e.at("shapes").contains(tensor)) continue;
      EXPECT_EQ(n.out_shapes[0].dims, e.at("shapes").at(tensor).get<std::vector<std::int64_t>>()) << n.id;
      ++checked;
    }
    EXPECT_EQ(checked, g.size());
    for (auto it = e.at("macs").begin(); it != e.at("macs").end(); ++it)
      EXPECT_EQ(g.node(it.key()).macs, it.value().get<std::int64_t>()) << it.key();
  }
}

TEST(Onnx, AutoPadSameUpperResolvesToExplicitPads) {
  auto g = infer_shapes(load_model_file(data("mixed.onnx")), 1);
  const auto& c2 = g.node("c2");
  EXPECT_FALSE(c2.params.count("auto_pad"));
  // 16 in, k=3, s=2 -> out 8 needs total pad 1, extra at the end.
  EXPECT_EQ(attr_ints(c2.params, "pads"), (IntList{0, 0, 1, 1}));
}

TEST(Onnx, OpaqueNodeKeepsEdgesAndDeclaredShape) {
  auto g = infer_shapes(load_model_file(data("opaque.onnx")), 2);
  const auto& custom = g.node("custom");
  EXPECT_EQ(custom.op_type, OpType::Opaque);
  EXPECT_EQ(custom.onnx_op, "NonMaxSuppressionLike");
  EXPECT_EQ(custom.out_shapes[0].dims, (std::vector<std::int64_t>{2, 8, 2, 2}));
  EXPECT_EQ(custom.macs, 0);
  EXPECT_EQ(g.node("y").in_shapes[0].dims, (std::vector<std::int64_t>{2, 8, 2, 2}));
  // No declared shape: LRN is opaque too and mirrors its input.
  EXPECT_EQ(g.node("lrn").op_type, OpType::Opaque);
  EXPECT_EQ(g.node("lrn").out_shapes[0].dims, (std::vector<std::int64_t>{2, 8, 4, 4}));
  EXPECT_EQ(g.edge_count(), 3u);
}

TEST(Onnx, TruncatedBytesReportOffset) {
  auto bytes = read_file(data("mixed.onnx"));
  for (std::size_t cut : {bytes.size() / 3, bytes.size() / 2, bytes.size() - 3}) {
    try {
      load_model(std::string_view(bytes).substr(0, cut));
      ADD_FAILURE() << "cut " << cut << " accepted";
    } catch (const Error& e) {
      EXPECT_TRUE(e.kind() == ErrorKind::parse || e.kind() == ErrorKind::structure) << e.what();
      if (e.kind() == ErrorKind::parse) {
        EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
      }
    }
  }
}

TEST(Onnx, GarbageIsParseError) {
  try {
    load_model(std::string("\x3a\xff\xff\xff\xff\xff\xff\xff\xff\xff\xff", 11));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }
}

TEST(Onnx, EncodeDecodeRoundTripPreservesSignatures) {
  auto text = parse_text_graph(fx::resnet_v1_text(18));
  auto decoded = load_model(encode_onnx(text));
  ASSERT_EQ(decoded.size(), text.size());
  auto a = infer_shapes(text, 1);
  auto b = infer_shapes(decoded, 1);
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(signature(a.nodes()[i], DType::f32), signature(b.nodes()[i], DType::f32)) << a.nodes()[i].id;
}

TEST(Onnx, TopologyIndependentOfFileNodeOrder) {
  auto g = load_model_file(data("mixed.onnx"));
  auto order = topo_order(g);
  EXPECT_EQ(order.front(), "c1");
  EXPECT_EQ(order.back(), "tanh");
}

// Published ResNet50-v1 from the ONNX model zoo; the test is skipped unless
// LBOUND_RESNET50_ONNX points at a local copy.
TEST(OnnxZoo, ResNet50V1PublishedFile) {
  const char* path = std::getenv("LBOUND_RESNET50_ONNX");
  if (!path || !*path) GTEST_SKIP() << "set LBOUND_RESNET50_ONNX to run";
  auto g = infer_shapes(load_model_file(path), 1);
  EXPECT_EQ(g.size(), 175u);
  auto u = unique_layers({g}, DType::f32);
  EXPECT_EQ(u.pooled.unique, 47u);
  EXPECT_NEAR(static_cast<double>(macs(g).total) / 3.87e9, 1.0, 0.02);
}
