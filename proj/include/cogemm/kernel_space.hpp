#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogemm/gpu_model.hpp"

namespace cogemm {

/// One GEMM problem instance: C[m x n] = op(A)[m x k] * op(B)[k x n].
struct GemmShape {
  std::int64_t m = 1;
  std::int64_t n = 1;
  std::int64_t k = 1;
  bool trans_a = false;
  bool trans_b = false;
  Precision precision = Precision::Fp32;

  int elem_bytes() const { return cogemm::elem_bytes(precision); }
  double flops() const { return 2.0 * static_cast<double>(m) * static_cast<double>(n) * static_cast<double>(k); }
  std::int64_t output_size() const { return m * n; }

  // "M_N_K_T1T2_prec", e.g. "128_4096_1024_00_fp32".
  std::string key() const;
  static GemmShape from_key(const std::string& key);

  void validate() const;

  auto operator<=>(const GemmShape&) const = default;
};

// Packed, order-preserving encoding of the kernel parameters. Stable across
// different space bounds, so ids stay comparable between runs.
using KernelId = std::uint32_t;

struct KernelConfig {
  int tile_m = 64;
  int tile_n = 64;
  int unroll_k = 8;
  int threads_per_wg = 256;
  int coalesce_width = 1;
  bool prefetch = false;
  int vgpr_per_thread = 40;
  KernelId id = 0;

  std::int64_t lds_bytes(int elem_bytes) const {
    return static_cast<std::int64_t>(elem_bytes) * (tile_m + tile_n) * unroll_k * (prefetch ? 2 : 1);
  }
  std::int64_t regs_per_wg() const { return static_cast<std::int64_t>(vgpr_per_thread) * threads_per_wg; }

  // Human-readable, e.g. "MT128x64_UK16_T256_C4_PF1".
  std::string name() const;

  bool operator==(const KernelConfig&) const = default;
};

KernelId make_kernel_id(int tile_m, int tile_n, int unroll_k, int threads_per_wg, int coalesce_width, bool prefetch);

struct SpaceBounds {
  std::vector<int> tile_m{32, 64, 128, 256};
  std::vector<int> tile_n{32, 64, 128, 256};
  std::vector<int> unroll_k{8, 16};
  std::vector<int> threads_per_wg{256};
  std::vector<int> coalesce_width{1, 2, 4};
  std::vector<bool> prefetch{false, true};
  // Element size the LDS check is made against; 4 covers both precisions.
  int elem_bytes = 4;
  int vgpr_base = 32;
  int vgpr_per_coalesce = 8;

  void validate() const;
};

struct KernelFeatures {
  std::int64_t num_wgs = 0;
  std::int64_t occupancy = 0;
  double waves = 0.0;

  bool operator==(const KernelFeatures&) const = default;
};

// Per-CU hardware limits that bound occupancy.
struct CuLimits {
  std::int64_t lds_per_cu = 0;
  std::int64_t regfile_per_cu = 0;
  std::int64_t max_wgs_per_cu = 0;

  static CuLimits of(const GpuResources& gpu) { return {gpu.lds_per_cu, gpu.regfile_per_cu, gpu.max_wgs_per_cu}; }
};

KernelConfig make_kernel(int tile_m, int tile_n, int unroll_k, int threads_per_wg, int coalesce_width, bool prefetch,
                         const SpaceBounds& bounds = {});

// 0 when the kernel cannot be resident at all.
std::int64_t occupancy(const KernelConfig& kernel, int elem_bytes, const CuLimits& limits);

bool is_valid(const KernelConfig& kernel, int elem_bytes, const CuLimits& limits);

/// Cartesian product of the bounds, filtered to kernels that fit the GPU,
/// sorted by id. Throws EmptySpaceError when nothing survives.
std::vector<KernelConfig> enumerate_kernels(const SpaceBounds& bounds, const GpuResources& gpu);

KernelFeatures derived_features(const GemmShape& shape, const KernelConfig& kernel, const CuLimits& limits,
                                std::int64_t num_cus);
KernelFeatures derived_features(const GemmShape& shape, const KernelConfig& kernel, const GpuResources& gpu);

void to_json(nlohmann::json& j, const GemmShape& s);
void from_json(const nlohmann::json& j, GemmShape& s);
void to_json(nlohmann::json& j, const KernelConfig& k);
void from_json(const nlohmann::json& j, KernelConfig& k);
void to_json(nlohmann::json& j, const KernelFeatures& f);
void from_json(const nlohmann::json& j, KernelFeatures& f);
void to_json(nlohmann::json& j, const SpaceBounds& b);
void from_json(const nlohmann::json& j, SpaceBounds& b);

SpaceBounds load_space_bounds(const std::string& path);

}  // namespace cogemm
