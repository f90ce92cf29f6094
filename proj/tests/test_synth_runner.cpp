// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "lbound/benchgen.hpp"
#include "lbound/synth_runner.hpp"
#include "support/models.hpp"

using namespace lbound;

namespace {

ModelGraph build(const std::string& text, std::int64_t batch = 1) { return infer_shapes(parse_text_graph(text), batch); }

SystemProfile v100_no_overhead() {
  auto s = *find_system(builtin_systems(), "Tesla_V100");
  s.kernel_overhead_us = 0;
  return s;
}

BenchmarkSpec conv_spec(const ModelGraph& g, const std::string& id, ConvAlgorithm a, DType dt = DType::f32) {
  return {signature(g.node(id), dt), a, dt, Layout::NCHW, std::nullopt, "cudnnConvolutionForward"};
}

BenchmarkSpec plain_spec(const ModelGraph& g, const std::string& id, DType dt = DType::f32) {
  auto sig = signature(g.node(id), dt);
  return {sig, std::nullopt, dt, Layout::NCHW, std::nullopt, concrete_api(*api_for(sig.op_type), dt)};
}

// 1x1 conv, 64 -> 256 channels at 56x56: 56*56*256*64 MACs.
const char* kPointwise = R"(
input x Nx64x56x56
init w 256x64x1x1
node c Conv inputs=x,w attrs=kernel_shape=1,1
node r Relu inputs=c
)";

std::string conv_text(int k, int stride, int channels) {
  auto c = std::to_string(channels);
  auto ks = std::to_string(k);
  auto s = std::to_string(stride);
  return "input x Nx" + c + "x28x28\ninit w " + c + "x" + c + "x" + ks + "x" + ks +
         "\nnode c Conv inputs=x,w attrs=kernel_shape=" + ks + "," + ks + ";strides=" + s + "," + s + "\n";
}

}  // namespace

TEST(SystemProfiles, SevenBuiltinsWithDatasheetPeaks) {
  const auto& s = builtin_systems();
  ASSERT_EQ(s.size(), 7u);
  auto v100 = find_system(s, "Tesla_V100");
  ASSERT_TRUE(v100);
  EXPECT_DOUBLE_EQ(v100->fp32_tflops, 15.7);
  EXPECT_DOUBLE_EQ(*v100->tensor_tflops, 125.0);
  EXPECT_DOUBLE_EQ(v100->mem_bw_gbps, 900.0);
  EXPECT_FALSE(find_system(s, "Tesla_K80")->tensor_core);
  EXPECT_FALSE(find_system(s, "TITAN_Xp")->tensor_core);
  EXPECT_TRUE(find_system(s, "Tesla_T4")->tensor_core);
  EXPECT_EQ(find_system(s, "nope"), nullptr);
  for (const auto& p : s) EXPECT_NO_THROW(p.validate());
}

TEST(SystemProfiles, DefaultFactorsAndWinogradGate) {
  const auto& v = *find_system(builtin_systems(), "Tesla_V100");
  EXPECT_DOUBLE_EQ(v.factor(ConvAlgorithm::IPGEMM, true), 1.0);
  EXPECT_DOUBLE_EQ(v.factor(ConvAlgorithm::DRCT, true), 2.0);
  EXPECT_DOUBLE_EQ(v.factor(ConvAlgorithm::WING, true), 0.8);
  EXPECT_DOUBLE_EQ(v.factor(ConvAlgorithm::WINGNF, true), 0.9);
  EXPECT_DOUBLE_EQ(v.factor(ConvAlgorithm::WING, false), 10.0);
  EXPECT_DOUBLE_EQ(v.factor(ConvAlgorithm::WINGNF, false), 10.0);
  EXPECT_DOUBLE_EQ(v.factor(ConvAlgorithm::FFT, false), 1.4);
}

TEST(SystemProfiles, IniRoundTrip) {
  auto text = write_system_profiles(builtin_systems());
  auto back = parse_system_profiles(text);
  ASSERT_EQ(back.size(), 7u);
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto& a = builtin_systems()[i];
    const auto& b = back[i];
    EXPECT_EQ(a.system_id, b.system_id);
    EXPECT_EQ(a.fp32_tflops, b.fp32_tflops);
    EXPECT_EQ(a.tensor_tflops, b.tensor_tflops);
    EXPECT_EQ(a.mem_bw_gbps, b.mem_bw_gbps);
    EXPECT_EQ(a.kernel_overhead_us, b.kernel_overhead_us);
    EXPECT_EQ(a.algo_factor, b.algo_factor);
    EXPECT_EQ(a.tensor_core, b.tensor_core);
  }
  EXPECT_EQ(write_system_profiles(back), text);
}

TEST(SystemProfiles, IniParsing) {
  auto s = parse_system_profiles(R"(
# desk GPU
[Desk]
fp32_tflops = 2.5
mem_bw_gbps = 100   # measured
kernel_overhead_us = 1
algo_factor.WING = 0.5
)");
  ASSERT_EQ(s.size(), 1u);
  EXPECT_FALSE(s[0].tensor_core);
  EXPECT_DOUBLE_EQ(s[0].factor(ConvAlgorithm::WING, true), 0.5);
  EXPECT_DOUBLE_EQ(s[0].factor(ConvAlgorithm::GEMM, true), 1.25);

  for (const char* bad : {"fp32_tflops = 1\n", "[A]\nfp32_tflops = x\n", "[A]\nbogus = 1\n",
                          "[A]\nfp32_tflops = 1\nmem_bw_gbps = 1\ntensor_core = true\n",
                          "[A]\nfp32_tflops = 1\nmem_bw_gbps = 1\nalgo_factor.NOPE = 1\n",
                          "[A]\nfp32_tflops = 1\nmem_bw_gbps = 1\nalgo_factor.FFT = 0\n",
                          "[A]\nfp32_tflops = 1\nmem_bw_gbps = 1\n[A]\nfp32_tflops = 1\nmem_bw_gbps = 1\n",
                          "[A]\nmem_bw_gbps = 1\n"}) {
    try {
      parse_system_profiles(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::config) << bad;
    }
  }
}

TEST(Simulate, ComputeBoundPointwiseConv) {
  auto g = build(kPointwise);
  auto spec = conv_spec(g, "c", ConvAlgorithm::IPGEMM);
  auto c = cost(spec, v100_no_overhead());
  EXPECT_EQ(c.macs, 51380224);
  EXPECT_GT(c.compute_us, c.memory_us);
  auto r = simulate(spec, v100_no_overhead());
  ASSERT_TRUE(r.ok());
  EXPECT_NEAR(*r.latency_us, 2.0 * 51380224 / (15.7 * 1e6), 1e-12);
  EXPECT_NEAR(*r.latency_us, 6.545, 0.001);
  EXPECT_EQ(r.key, spec.key("Tesla_V100"));
  EXPECT_EQ(r.source, RecordSource::simulated);
  EXPECT_EQ(r.metadata.kernels, std::vector<std::string>{"sim_sgemm_Conv"});
  EXPECT_DOUBLE_EQ(r.metadata.metrics.at("macs"), 51380224.0);
}

TEST(Simulate, ZeroMacActivationIsOverheadPlusMemory) {
  auto g = build(kPointwise);
  const auto& sys = *find_system(builtin_systems(), "Tesla_V100");
  auto r = simulate(plain_spec(g, "r"), sys);
  double bytes = 2.0 * 256 * 56 * 56 * 4;
  EXPECT_NEAR(*r.latency_us, sys.kernel_overhead_us + bytes / (900.0 * 1e3), 1e-12);
  EXPECT_DOUBLE_EQ(r.metadata.metrics.at("compute_us"), 0.0);
}

TEST(Simulate, Deterministic) {
  auto g = build(kPointwise);
  const auto& sys = *find_system(builtin_systems(), "Tesla_T4");
  for (auto a : kAllConvAlgorithms) {
    auto spec = conv_spec(g, "c", a, DType::f16);
    auto r1 = simulate(spec, sys);
    auto r2 = simulate(spec, sys);
    EXPECT_TRUE(r1.same_content(r2));
    EXPECT_EQ(record_to_json(r1).dump(), record_to_json(r2).dump());
  }
}

TEST(Simulate, MonotoneInMacs) {
  const auto& sys = *find_system(builtin_systems(), "TITAN_Xp");
  for (auto a : {ConvAlgorithm::IPGEMM, ConvAlgorithm::GEMM, ConvAlgorithm::WING}) {
    double prev = 0;
    for (int ch : {8, 16, 32, 64, 128, 256}) {
      auto g = build(conv_text(3, 1, ch));
      auto r = simulate(conv_spec(g, "c", a), sys);
      ASSERT_TRUE(r.ok());
      EXPECT_GE(*r.latency_us, prev) << ch;
      prev = *r.latency_us;
    }
  }
}

TEST(Simulate, TensorCoresNeverSlowerForComputeBoundConv) {
  auto g = build(conv_text(3, 1, 256));
  for (const auto& sys : builtin_systems()) {
    if (!sys.tensor_core) continue;
    for (auto a : kAllConvAlgorithms) {
      auto f32 = simulate(conv_spec(g, "c", a, DType::f32), sys);
      auto f16 = simulate(conv_spec(g, "c", a, DType::f16), sys);
      EXPECT_LE(*f16.latency_us, *f32.latency_us) << sys.system_id;
      EXPECT_EQ(f16.metadata.kernels, std::vector<std::string>{"sim_h884_Conv"});
    }
  }
}

TEST(Simulate, NoTensorCoresMeansFp32Peak) {
  auto g = build(conv_text(3, 1, 128));
  const auto& xp = *find_system(builtin_systems(), "TITAN_Xp");
  auto c = cost(conv_spec(g, "c", ConvAlgorithm::IPGEMM, DType::f16), xp);
  EXPECT_FALSE(c.tensor_core);
  EXPECT_DOUBLE_EQ(c.peak_tflops, 12.2);
  // Activation rows are not tensor-core capable even on Volta.
  auto pw = build(kPointwise);
  EXPECT_FALSE(uses_tensor_cores(plain_spec(pw, "r", DType::f16), *find_system(builtin_systems(), "Tesla_V100")));
}

TEST(Simulate, FusedCheaperThanMemberSum) {
  auto g = build(R"(
input x Nx32x28x28
init w 32x32x3x3
init b 32x1x1
node c Conv inputs=x,w attrs=kernel_shape=3,3;pads=1,1,1,1
node b Add inputs=c,b
node r Relu inputs=b
)");
  for (const auto& sys : builtin_systems()) {
    auto conv = simulate(conv_spec(g, "c", ConvAlgorithm::IPGEMM), sys);
    auto bias = simulate(plain_spec(g, "b"), sys);
    auto relu = simulate(plain_spec(g, "r"), sys);
    BenchmarkSpec fs{signature(g.node("c"), DType::f32), ConvAlgorithm::IPGEMM, DType::f32, Layout::NCHW,
                     "conv_bias_act:Relu", "cudnnConvolutionBiasActivationForward"};
    auto fused = simulate(fs, sys);
    EXPECT_LT(*fused.latency_us, *conv.latency_us + *bias.latency_us + *relu.latency_us) << sys.system_id;
    EXPECT_EQ(fused.key.fused, std::optional<std::string>("conv_bias_act:Relu"));
  }
}

TEST(Simulate, FftFamilyUnsupportedWhenStrided) {
  auto g = build(conv_text(3, 2, 32));
  const auto& sys = *find_system(builtin_systems(), "Tesla_M60");
  for (auto a : {ConvAlgorithm::FFT, ConvAlgorithm::TFFT}) {
    auto r = simulate(conv_spec(g, "c", a), sys);
    EXPECT_EQ(r.status, RecordStatus::unsupported);
    EXPECT_FALSE(r.latency_us);
  }
  EXPECT_TRUE(simulate(conv_spec(g, "c", ConvAlgorithm::GEMM), sys).ok());
  auto wing = simulate(conv_spec(g, "c", ConvAlgorithm::WING), sys);
  auto ipgemm = simulate(conv_spec(g, "c", ConvAlgorithm::IPGEMM), sys);
  EXPECT_GT(*wing.latency_us, *ipgemm.latency_us);
}

TEST(Simulate, JitterIsSeededAndBounded) {
  auto g = fx::resnet_v1(18);
  auto specs = generate_specs(unique_layers({g}, DType::f32).signatures);
  const auto& sys = *find_system(builtin_systems(), "Quadro_RTX");
  bool any_changed = false;
  for (const auto& s : specs) {
    auto base = simulate(s, sys);
    if (!base.ok()) continue;
    auto a = simulate(s, sys, {42});
    auto b = simulate(s, sys, {42});
    auto c = simulate(s, sys, {43});
    EXPECT_EQ(a.latency_us, b.latency_us);
    EXPECT_LE(*a.latency_us, *base.latency_us * 1.03 + 1e-12);
    EXPECT_GE(*a.latency_us, *base.latency_us * 0.97 - 1e-12);
    if (a.latency_us != c.latency_us) any_changed = true;
  }
  EXPECT_TRUE(any_changed);
}
