#pragma once

#include <vector>

#include "cogemm/tuner.hpp"

namespace cogemm::testing {

// Trimmed kernel space; keeps tuning in the unit tests fast.
inline std::vector<KernelConfig> small_space() {
  SpaceBounds b;
  b.tile_m = {32, 64, 128};
  b.tile_n = {32, 64, 128};
  b.unroll_k = {8};
  b.coalesce_width = {1, 4};
  return enumerate_kernels(b, default_gpu());
}

inline const GemmShape kSmall{128, 4096, 1024, false, false, Precision::Fp32};
inline const GemmShape kSquare{512, 512, 512, false, true, Precision::Fp16};
inline const GemmShape kWide{2048, 1024, 256, true, false, Precision::Fp32};

inline std::vector<CorpusItem> small_corpus() {
  return {{"a", kSmall}, {"a", kSquare}, {"b", kSmall}, {"b", kWide}};
}

inline const GoLibrary& small_library() {
  static const GoLibrary lib =
      build_go_library(small_corpus(), default_gpu(), small_space(), ModelCard{}, Exec::Serial);
  return lib;
}

}  // namespace cogemm::testing
