#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogemm/gpu_model.hpp"
#include "cogemm/kernel_space.hpp"

namespace cogemm {

/// Calibration constants of the analytical cost model.
struct ModelCard {
  double launch_overhead_s = 2e-6;
  // eff = 1 - coalesce_penalty / coalesce_width
  double coalesce_penalty = 0.5;
  // Applied to eff when LDS is double-buffered; eff is clamped to 1.
  double prefetch_gain = 1.0;
  // Multiplier on tile re-reads when B is transposed.
  double trans_b_read_penalty = 1.25;

  void validate() const;
  bool operator==(const ModelCard&) const = default;
};

void to_json(nlohmann::json& j, const ModelCard& c);
void from_json(const nlohmann::json& j, ModelCard& c);
ModelCard load_model_card(const std::string& path);

/// The slice of a GpuResources the cost model reads, resolved for one precision.
struct SimResources {
  std::int64_t cus = 0;
  std::int64_t llc_bytes = 0;
  double mem_bw = 0.0;
  double cu_peak_flops = 0.0;
  CuLimits limits;

  static SimResources of(const GpuResources& gpu, Precision p);
};

struct SimResult {
  double runtime_s = 0.0;
  double compute_time_s = 0.0;
  double mem_time_s = 0.0;
  double dram_bytes = 0.0;
  KernelFeatures features;
  double busy_s = 0.0;       // perfectly packed compute time (all CUs busy)
  double wave_time_s = 0.0;  // time of one full wave

  bool operator==(const SimResult&) const = default;
};

struct SimJob {
  GemmShape shape;
  KernelConfig kernel;
};

struct ConcurrentResult {
  double makespan_s = 0.0;
  double packed_compute_s = 0.0;
  double total_mem_s = 0.0;
  // Per-job costs with the job's share of the LLC, in input order.
  std::vector<SimResult> per_job;
};

// Off-chip traffic of one kernel given the cache capacity it can use.
double dram_bytes(const GemmShape& shape, const KernelConfig& kernel, const KernelFeatures& features,
                  std::int64_t num_cus, std::int64_t llc_bytes, const ModelCard& card);

SimResult simulate_isolated(const GemmShape& shape, const KernelConfig& kernel, const SimResources& res,
                            const ModelCard& card);
SimResult simulate_isolated(const GemmShape& shape, const KernelConfig& kernel, const GpuResources& gpu,
                            const ModelCard& card);

/// Wave-packed co-execution of up to 16 kernels sharing CUs, LLC and DRAM
/// bandwidth. Reductions run over a canonical job order, so the result is
/// bitwise independent of the input order.
ConcurrentResult simulate_concurrent(std::span<const SimJob> jobs, const GpuResources& gpu, const ModelCard& card);

double simulate_sequential(std::span<const SimJob> jobs, const GpuResources& gpu, const ModelCard& card);

// Each job on gpu.num_cus / n CUs; LLC and bandwidth stay shared.
double simulate_cu_partition(std::span<const SimJob> jobs, const GpuResources& gpu, const ModelCard& card);

// Each job alone on a 1/n slice of CUs, LLC and bandwidth.
double simulate_resource_partition(std::span<const SimJob> jobs, const GpuResources& gpu, const ModelCard& card);

inline constexpr std::size_t kMaxConcurrentJobs = 16;

}  // namespace cogemm
