#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

namespace cogemm {

enum class Precision { Fp32, Fp16 };

std::string_view to_string(Precision p);
Precision precision_from_string(std::string_view s);
int elem_bytes(Precision p);

/// Machine description used by the tuner, the cost model and the
/// partitioned baselines. Per-CU peak throughput is kept per precision.
struct GpuResources {
  std::string name = "gpu";
  std::int64_t num_cus = 0;
  std::int64_t llc_bytes = 0;
  double mem_bw = 0.0;             // bytes / second
  double cu_peak_flops_fp32 = 0.0;  // flops / second / CU
  double cu_peak_flops_fp16 = 0.0;
  std::int64_t lds_per_cu = 0;       // bytes
  std::int64_t regfile_per_cu = 0;   // registers
  std::int64_t max_wgs_per_cu = 0;
  double cp_clock_hz = 0.0;
  std::int64_t cp_mem_latency_cycles = 0;

  double cu_peak_flops(Precision p) const {
    return p == Precision::Fp16 ? cu_peak_flops_fp16 : cu_peak_flops_fp32;
  }

  // Throws ValidationError unless every field is strictly positive.
  void validate() const;

  bool operator==(const GpuResources&) const = default;
};

/// Built-in 120-CU, 8 MiB LLC profile; data/gpu_full.json carries the
/// same numbers.
GpuResources default_gpu();

struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 1;

  // floor(value * num / den) for non-negative value.
  std::int64_t scale_floor(std::int64_t value) const { return value * num / den; }
  bool operator==(const Rational&) const = default;
};

enum class RcLabel { Full, Half, Quarter };

std::string_view to_string(RcLabel rc);
RcLabel rc_from_string(std::string_view s);

struct ResourceConstraint {
  RcLabel label = RcLabel::Full;
  Rational cu_scale{1, 1};
  Rational llc_scale{1, 1};

  static ResourceConstraint full() { return {RcLabel::Full, {1, 1}, {1, 1}}; }
  static ResourceConstraint half() { return {RcLabel::Half, {1, 2}, {1, 2}}; }
  static ResourceConstraint quarter() { return {RcLabel::Quarter, {1, 4}, {1, 4}}; }
  static ResourceConstraint from_label(RcLabel label);

  bool operator==(const ResourceConstraint&) const = default;
};

// Scales num_cus and llc_bytes (floor). Memory bandwidth is left alone.
GpuResources apply_constraint(const GpuResources& gpu, const ResourceConstraint& rc);

enum class PartitionMode { CuOnly, CuLlcBw };

// Static 1/n share of the device for the partitioned baselines.
GpuResources partition(const GpuResources& gpu, std::int64_t n, PartitionMode mode);

void to_json(nlohmann::json& j, const GpuResources& g);
void from_json(const nlohmann::json& j, GpuResources& g);

GpuResources load_gpu(const std::string& path);

}  // namespace cogemm
