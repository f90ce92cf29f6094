// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>
#include <regex>

#include "lbound/profile_ingest.hpp"
#include "support/tensorcore_cases.hpp"

using namespace lbound;

namespace {

ExecutionProfile sample_profile() {
  ExecutionProfile p;
  p.model = "resnet50 v1";
  p.system_id = "Tesla_V100";
  p.batch = 4;
  p.measured_latency_ms = 6.125;
  p.api_calls = {
      {1, "cudnnConvolutionForward", {{"algo", "WING"}, {"x", "[4,3,224,224]"}}, {"main", "mx::Conv|Forward"}},
      {2, "cudnnAddTensor", {}, {}},
      {5, "cudaStreamWaitEvent", {{"odd;key=", "v\tal%ue"}}, {"frame\nwith newline"}},
  };
  p.kernels = {{"volta_h884cudnn_128x128", 12.5, std::make_pair(1, 1)},
               {"pad_kernel", 0.75, std::make_pair(1, 2)},
               {"untracked", 1e-3, std::nullopt}};
  return p;
}

std::string minimal(const std::string& calls = "1\tcudnnAddTensor\t\t\n") {
  return "LBOUND-PROFILE 1\n[META]\nmodel=m\nsystem=s\nbatch=1\nmeasured_latency_ms=2\n[APICALLS]\n" + calls;
}

ErrorKind kind_of(const std::function<void()>& f, std::string* what = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (what) *what = e.what();
    return e.kind();
  }
  return ErrorKind::usage;
}

const char* kConvLog = R"(I! CuDNN (v7605) function cudnnConvolutionForward() called:
i!     handle: type=cudnnHandle_t; streamId=0x0 (defaultStream);
i!     alpha: type=CUDNN_DATA_FLOAT; val=1.000000;
i!     xDesc: type=cudnnTensorDescriptor_t:
i!         dataType: type=cudnnDataType_t; val=CUDNN_DATA_FLOAT (0);
i!         nbDims: type=int; val=4;
i!         dimA: type=int; val=[1,64,56,56];
i!         strideA: type=int; val=[200704,3136,56,1];
i!     wDesc: type=cudnnFilterDescriptor_t:
i!         dataType: type=cudnnDataType_t; val=CUDNN_DATA_FLOAT (0);
i!         dimA: type=int; val=[64,64,3,3];
i!     convDesc: type=cudnnConvolutionDescriptor_t:
i!         padA: type=int; val=[1,1];
i!         strideA: type=int; val=[1,1];
i!         dilationA: type=int; val=[1,1];
i!         groupCount: type=int; val=1;
i!     algo: type=cudnnConvolutionFwdAlgo_t; val=CUDNN_CONVOLUTION_FWD_ALGO_WINOGRAD (6);
i!     yDesc: type=cudnnTensorDescriptor_t:
i!         dimA: type=int; val=[1,64,56,56];
i! Time: 2019-10-01T10:00:00.000000 (0d+0h+0m+1s since start)
i! Process=1234; Thread=1234; GPU=0; Handle=0x55; StreamId=0x0 (defaultStream).

I! CuDNN (v7605) function cudnnAddTensor() called:
i!     alpha: type=CUDNN_DATA_FLOAT; val=1.000000;
i!     aDesc: type=cudnnTensorDescriptor_t:
i!         dimA: type=int; val=[1,64,1,1];
i! Time: 2019-10-01T10:00:00.000100 (0d+0h+0m+1s since start)

I! cuBLAS (v10) function cublasSgemm_v2() called:
i!     transa: type=cublasOperation_t; val=CUBLAS_OP_T (1);
i!     m: type=int; val=1000;
i!     n: type=int; val=1;
i!     k: type=int; val=2048;
)";

}  // namespace

TEST(Profile, RoundTripIsIdentity) {
  auto p = sample_profile();
  auto text = serialize_profile(p);
  auto back = parse_profile(text);
  EXPECT_EQ(back, p);
  EXPECT_EQ(serialize_profile(back), text);
  EXPECT_DOUBLE_EQ(back.measured_latency_us(), 6125.0);
}

TEST(Profile, RoundTripWithoutKernelSection) {
  auto p = sample_profile();
  p.kernels.clear();
  p.has_kernels = false;
  auto text = serialize_profile(p);
  EXPECT_EQ(text.find("[KERNELS]"), std::string::npos);
  EXPECT_EQ(parse_profile(text), p);
  p.has_kernels = true;
  EXPECT_EQ(parse_profile(serialize_profile(p)), p);
}

TEST(Profile, RandomRoundTrip) {
  std::mt19937_64 rng(11);
  const std::string alphabet = "abcXYZ09_;=|,%\t\n\r :()[]";
  auto str = [&](std::size_t max, bool nonempty) {
    std::string s;
    auto n = rng() % (max + 1);
    if (nonempty && n == 0) n = 1;
    for (std::size_t i = 0; i < n; ++i) s += alphabet[rng() % alphabet.size()];
    return s;
  };
  for (int t = 0; t < 200; ++t) {
    ExecutionProfile p;
    p.model = str(10, false);
    p.system_id = str(10, false);
    p.batch = static_cast<std::int64_t>(rng() % 64 + 1);
    p.measured_latency_ms = static_cast<double>(rng() % 100000 + 1) / 997.0;
    std::int64_t seq = static_cast<std::int64_t>(rng() % 3);
    for (int c = static_cast<int>(rng() % 6); c > 0; --c) {
      ApiCall call{seq += static_cast<std::int64_t>(rng() % 4 + 1), str(12, true), {}, {}};
      for (int k = static_cast<int>(rng() % 3); k > 0; --k) call.params[str(5, false)] = str(6, false);
      for (int f = static_cast<int>(rng() % 3); f > 0; --f) call.backtrace.push_back(str(6, true));
      p.api_calls.push_back(std::move(call));
    }
    p.has_kernels = rng() % 2;
    if (p.has_kernels)
      for (int k = static_cast<int>(rng() % 4); k > 0; --k) {
        KernelRecord kr{str(10, false), static_cast<double>(rng() % 5000 + 1) / 7.0, std::nullopt};
        if (rng() % 2) {
          auto a = static_cast<std::int64_t>(rng() % 10);
          kr.seq_between = std::make_pair(a, a + static_cast<std::int64_t>(rng() % 3));
        }
        p.kernels.push_back(std::move(kr));
      }
    auto text = serialize_profile(p);
    ASSERT_EQ(parse_profile(text), p) << text;
  }
}

TEST(Profile, MinimalHasNoKernels) {
  auto p = parse_profile(minimal());
  ASSERT_EQ(p.api_calls.size(), 1u);
  EXPECT_TRUE(p.kernels.empty());
  EXPECT_FALSE(p.has_kernels);
  EXPECT_EQ(p.api_calls[0].api_name, "cudnnAddTensor");
}

TEST(Profile, ConvCallsCarryAlgorithms) {
  auto p = parse_profile(minimal("1\tcudnnConvolutionForward\talgo=IGEMM\n"
                                 "2\tcudnnConvolutionForward\talgo=WING;x=[1,3,8,8]\n"
                                 "3\tcudnnConvolutionForward\talgo=FFT\n"));
  ASSERT_EQ(p.api_calls.size(), 3u);
  for (const auto& c : p.api_calls) EXPECT_TRUE(c.params.count("algo"));
  EXPECT_EQ(p.api_calls[1].params.at("algo"), "WING");
}

TEST(Profile, FormatErrors) {
  std::string what;
  EXPECT_EQ(kind_of([&] { parse_profile(minimal("1\ta\t\n1\tb\t\n")); }, &what), ErrorKind::format);
  EXPECT_NE(what.find("does not increase"), std::string::npos);
  EXPECT_EQ(kind_of([&] { parse_profile(minimal("2\ta\n1\tb\n")); }), ErrorKind::format);

  EXPECT_EQ(kind_of([] { parse_profile("LBOUND-PROFILE 1\n[META]\nmodel=m\nsystem=s\nbatch=1\n"
                                       "measured_latency_ms=1\n"); },
                    &what),
            ErrorKind::format);
  EXPECT_NE(what.find("[APICALLS]"), std::string::npos);
  EXPECT_EQ(kind_of([] { parse_profile("LBOUND-PROFILE 1\n[APICALLS]\n"); }, &what), ErrorKind::format);
  EXPECT_NE(what.find("[META]"), std::string::npos);
  EXPECT_EQ(kind_of([] { parse_profile("LBOUND-PROFILE 1\n[META]\nmodel=m\n[APICALLS]\n"); }, &what),
            ErrorKind::format);
  EXPECT_NE(what.find("system"), std::string::npos);

  for (const std::string& bad : std::vector<std::string>{
        std::string(""), std::string("PROFILE\n"), minimal("x\tapi\n"), minimal("1\t\n"),
        minimal("1\tapi\tnoequals\n"), minimal("1\tapi\t\t\t\n"), minimal() + "[KERNELS]\nk\t0\n",
        minimal() + "[KERNELS]\nk\t1\t3,2\n", minimal() + "[KERNELS]\nk\tx\n", minimal() + "[BOGUS]\n",
        minimal() + "[META]\n", minimal("1\tap%zzi\n"),
        "LBOUND-PROFILE 1\n[META]\nmodel=m\nsystem=s\nbatch=0\nmeasured_latency_ms=1\n[APICALLS]\n",
        "LBOUND-PROFILE 1\n[META]\nmodel=m\nsystem=s\nbatch=1\nmeasured_latency_ms=-1\n[APICALLS]\n",
        "LBOUND-PROFILE 1\n[META]\nmodel=m\nmodel=m\n[APICALLS]\n"})
    EXPECT_EQ(kind_of([&] { parse_profile(bad); }), ErrorKind::format) << bad;
}

TEST(Profile, KernelCorrelationHelpers) {
  KernelRecord launched{"k", 1, std::make_pair(3, 3)};
  KernelRecord between{"k", 1, std::make_pair(3, 4)};
  KernelRecord loose{"k", 1, std::nullopt};
  EXPECT_TRUE(launched.launched_by(3));
  EXPECT_FALSE(launched.between_calls());
  EXPECT_TRUE(between.between_calls());
  EXPECT_FALSE(between.launched_by(3));
  EXPECT_FALSE(loose.between_calls());
}

TEST(TensorCore, GoldenTable) {
  for (const auto& c : fx::kTensorCoreCases) EXPECT_EQ(detect_tensorcore(c.name), c.tensor_core) << c.name;
}

// Reference matcher: the same language as a conventional regular expression.
TEST(TensorCore, AgreesWithRegexOnRandomNames) {
  const std::regex re("_[ish][0-9]+");
  const std::string alphabet = "_ishISH0189ax";
  std::mt19937 rng(3);
  for (const auto& c : fx::kTensorCoreCases)
    EXPECT_EQ(std::regex_search(std::string(c.name), re), c.tensor_core) << c.name;
  for (int t = 0; t < 20000; ++t) {
    std::string s;
    for (auto n = rng() % 10; n > 0; --n) s += alphabet[rng() % alphabet.size()];
    ASSERT_EQ(detect_tensorcore(s), std::regex_search(s, re)) << s;
  }
}

TEST(CudnnLog, ParsesConvAddAndGemm) {
  auto r = parse_cudnn_log_detailed(kConvLog);
  EXPECT_TRUE(r.warnings.empty());
  ASSERT_EQ(r.calls.size(), 3u);
  const auto& conv = r.calls[0];
  EXPECT_EQ(conv.seq, 1);
  EXPECT_EQ(conv.api_name, "cudnnConvolutionForward");
  EXPECT_EQ(conv.params.at("algo"), "WING");
  EXPECT_EQ(conv.params.at("x"), "[1,64,56,56]");
  EXPECT_EQ(conv.params.at("w"), "[64,64,3,3]");
  EXPECT_EQ(conv.params.at("y"), "[1,64,56,56]");
  EXPECT_EQ(conv.params.at("pads"), "[1,1]");
  EXPECT_EQ(conv.params.at("strides"), "[1,1]");
  EXPECT_EQ(conv.params.at("group"), "1");
  EXPECT_EQ(conv.params.at("dtype"), "f32");
  EXPECT_EQ(r.calls[1].api_name, "cudnnAddTensor");
  EXPECT_FALSE(r.calls[1].params.count("algo"));
  EXPECT_EQ(r.calls[2].api_name, "cublasSgemm_v2");
  EXPECT_EQ(r.calls[2].params.at("transa"), "CUBLAS_OP_T");
  EXPECT_EQ(r.calls[2].params.at("k"), "2048");
}

TEST(CudnnLog, EveryAlgorithmTokenMaps) {
  for (auto a : kAllConvAlgorithms) {
    std::string log = "I! CuDNN (v8) function cudnnConvolutionForward() called:\n"
                      "i!   algo: type=cudnnConvolutionFwdAlgo_t; val=" +
                      std::string(cudnn_algo_token(a)) + " (" + std::to_string(static_cast<int>(a)) + ");\n";
    auto calls = parse_cudnn_log(log);
    ASSERT_EQ(calls.size(), 1u);
    EXPECT_EQ(calls[0].params.at("algo"), to_string(a));
  }
}

TEST(CudnnLog, EmptyText) {
  EXPECT_TRUE(parse_cudnn_log("").empty());
  EXPECT_TRUE(parse_cudnn_log("\n\nunrelated output\n").empty());
}

TEST(CudnnLog, LenientSkipsAndStrictThrows) {
  std::string log = std::string("I! CuDNN (vX) function broken() called:\ni!   a: type=int; val=1;\n\n") +
                    "I! CuDNN (v7) function cudnnAddTensor() called:\ni!   alpha: type=float; val=1;\n"
                    "i!   bad line without type\n\n" +
                    "I! CuDNN (v7) function cudnnActivationForward() called:\ni!   alpha: type=float; val=1;\n";
  auto r = parse_cudnn_log_detailed(log);
  ASSERT_EQ(r.calls.size(), 1u);
  EXPECT_EQ(r.calls[0].api_name, "cudnnActivationForward");
  EXPECT_EQ(r.calls[0].seq, 1);
  EXPECT_EQ(r.warnings.size(), 2u);
  EXPECT_EQ(kind_of([&] { parse_cudnn_log(log, true); }), ErrorKind::parse);
  EXPECT_NO_THROW(parse_cudnn_log(kConvLog, true));
}

TEST(CudnnLog, KernelTraceAndConvert) {
  auto kernels = parse_kernel_trace("volta_h884cudnn_128x128\t10.5\t1,1\npad\t0.5\t1,2\nother\t2\t\n");
  ASSERT_EQ(kernels.size(), 3u);
  EXPECT_TRUE(kernels[1].between_calls());
  EXPECT_FALSE(kernels[2].seq_between);

  ConvertInputs in;
  in.cudnn_log = kConvLog;
  in.kernel_trace = "volta_h884cudnn_128x128\t10.5\t1,1\n";
  in.model = "m";
  in.system_id = "Tesla_V100";
  in.measured_latency_ms = 1.5;
  auto p = convert_profile(in);
  EXPECT_EQ(p.api_calls.size(), 3u);
  EXPECT_TRUE(p.has_kernels);
  EXPECT_EQ(parse_profile(serialize_profile(p)), p);

  in.kernel_trace.reset();
  EXPECT_FALSE(convert_profile(in).has_kernels);
  in.measured_latency_ms = 0;
  EXPECT_EQ(kind_of([&] { convert_profile(in); }), ErrorKind::config);
}
