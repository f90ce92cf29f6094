// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "lbound/core.hpp"

namespace lbound {

// Forward convolution algorithms, in the order used for tie-breaking.
enum class ConvAlgorithm { IGEMM, IPGEMM, GEMM, DRCT, FFT, TFFT, WING, WINGNF };

inline constexpr std::array<ConvAlgorithm, 8> kAllConvAlgorithms = {
    ConvAlgorithm::IGEMM, ConvAlgorithm::IPGEMM, ConvAlgorithm::GEMM, ConvAlgorithm::DRCT,
    ConvAlgorithm::FFT,   ConvAlgorithm::TFFT,   ConvAlgorithm::WING, ConvAlgorithm::WINGNF};

inline const char* to_string(ConvAlgorithm a) {
  switch (a) {
    case ConvAlgorithm::IGEMM: return "IGEMM";
    case ConvAlgorithm::IPGEMM: return "IPGEMM";
    case ConvAlgorithm::GEMM: return "GEMM";
    case ConvAlgorithm::DRCT: return "DRCT";
    case ConvAlgorithm::FFT: return "FFT";
    case ConvAlgorithm::TFFT: return "TFFT";
    case ConvAlgorithm::WING: return "WING";
    case ConvAlgorithm::WINGNF: return "WINGNF";
  }
  return "?";
}

inline std::optional<ConvAlgorithm> parse_algorithm(std::string_view s) {
  for (auto a : kAllConvAlgorithms)
    if (s == to_string(a)) return a;
  return std::nullopt;
}

// cudnnConvolutionFwdAlgo_t enumerant for each algorithm (fixed 8-row table).
inline const char* cudnn_algo_token(ConvAlgorithm a) {
  switch (a) {
    case ConvAlgorithm::IGEMM: return "CUDNN_CONVOLUTION_FWD_ALGO_IMPLICIT_GEMM";
    case ConvAlgorithm::IPGEMM: return "CUDNN_CONVOLUTION_FWD_ALGO_IMPLICIT_PRECOMP_GEMM";
    case ConvAlgorithm::GEMM: return "CUDNN_CONVOLUTION_FWD_ALGO_GEMM";
    case ConvAlgorithm::DRCT: return "CUDNN_CONVOLUTION_FWD_ALGO_DIRECT";
    case ConvAlgorithm::FFT: return "CUDNN_CONVOLUTION_FWD_ALGO_FFT";
    case ConvAlgorithm::TFFT: return "CUDNN_CONVOLUTION_FWD_ALGO_FFT_TILING";
    case ConvAlgorithm::WING: return "CUDNN_CONVOLUTION_FWD_ALGO_WINOGRAD";
    case ConvAlgorithm::WINGNF: return "CUDNN_CONVOLUTION_FWD_ALGO_WINOGRAD_NONFUSED";
  }
  return "";
}

inline std::optional<ConvAlgorithm> algorithm_from_cudnn_token(std::string_view token) {
  for (auto a : kAllConvAlgorithms)
    if (token == cudnn_algo_token(a)) return a;
  return std::nullopt;
}

enum class Layout { NCHW, NHWC };

inline const char* to_string(Layout l) { return l == Layout::NCHW ? "NCHW" : "NHWC"; }

inline Layout parse_layout(std::string_view s) {
  if (s == "NCHW") return Layout::NCHW;
  if (s == "NHWC") return Layout::NHWC;
  throw Error(ErrorKind::config, "unknown layout '" + std::string(s) + "'");
}

}  // namespace lbound
