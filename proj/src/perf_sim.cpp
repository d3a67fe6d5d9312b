#include "cogemm/perf_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cogemm/error.hpp"
#include "cogemm/io.hpp"

namespace cogemm {

namespace {

// ceil() that treats values within rounding noise of an integer as that integer.
double snapped_ceil(double x) {
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x))) return r;
  return std::ceil(x);
}

double efficiency(const KernelConfig& kernel, const ModelCard& card) {
  double eff = 1.0 - card.coalesce_penalty / static_cast<double>(kernel.coalesce_width);
  if (kernel.prefetch) eff *= card.prefetch_gain;
  return std::min(eff, 1.0);
}

std::vector<std::size_t> canonical_order(std::span<const SimJob> jobs) {
  std::vector<std::size_t> order(jobs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (jobs[a].shape != jobs[b].shape) return jobs[a].shape < jobs[b].shape;
    return jobs[a].kernel.id < jobs[b].kernel.id;
  });
  return order;
}

void check_jobs(std::span<const SimJob> jobs) {
  if (jobs.empty()) throw ValidationError("concurrent simulation needs at least one job");
  if (jobs.size() > kMaxConcurrentJobs) throw ValidationError("at most 16 concurrent jobs are modeled");
}

}  // namespace

void ModelCard::validate() const {
  if (!(launch_overhead_s >= 0)) throw ValidationError("model card: launch_overhead_s must be >= 0");
  if (!(coalesce_penalty >= 0 && coalesce_penalty < 1)) throw ValidationError("model card: coalesce_penalty in [0,1)");
  if (!(prefetch_gain > 0)) throw ValidationError("model card: prefetch_gain must be > 0");
  if (!(trans_b_read_penalty >= 1)) throw ValidationError("model card: trans_b_read_penalty must be >= 1");
}

void to_json(nlohmann::json& j, const ModelCard& c) {
  j = nlohmann::json{{"launch_overhead_s", c.launch_overhead_s},
                     {"coalesce_penalty", c.coalesce_penalty},
                     {"prefetch_gain", c.prefetch_gain},
                     {"trans_b_read_penalty", c.trans_b_read_penalty}};
}

void from_json(const nlohmann::json& j, ModelCard& c) {
  ModelCard d;
  try {
    c.launch_overhead_s = j.value("launch_overhead_s", d.launch_overhead_s);
    c.coalesce_penalty = j.value("coalesce_penalty", d.coalesce_penalty);
    c.prefetch_gain = j.value("prefetch_gain", d.prefetch_gain);
    c.trans_b_read_penalty = j.value("trans_b_read_penalty", d.trans_b_read_penalty);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model card: ") + e.what());
  }
  c.validate();
}

ModelCard load_model_card(const std::string& path) { return read_json_file(path).get<ModelCard>(); }

SimResources SimResources::of(const GpuResources& gpu, Precision p) {
  return {gpu.num_cus, gpu.llc_bytes, gpu.mem_bw, gpu.cu_peak_flops(p), CuLimits::of(gpu)};
}

double dram_bytes(const GemmShape& shape, const KernelConfig& kernel, const KernelFeatures& features,
                  std::int64_t num_cus, std::int64_t llc_bytes, const ModelCard& card) {
  const double eb = shape.elem_bytes();
  const double m = static_cast<double>(shape.m), n = static_cast<double>(shape.n), k = static_cast<double>(shape.k);
  const double tile_sum = static_cast<double>(kernel.tile_m + kernel.tile_n);

  const double read_ideal = eb * k * (m + n);
  double actual_reads = eb * k * tile_sum * static_cast<double>(features.num_wgs);
  if (shape.trans_b) actual_reads *= card.trans_b_read_penalty;

  const double resident = static_cast<double>(std::min(features.num_wgs, features.occupancy * num_cus));
  const double wave_footprint = eb * k * tile_sum * resident;
  const double p_hit = std::clamp(1.0 - wave_footprint / static_cast<double>(llc_bytes), 0.0, 1.0);

  return read_ideal + (actual_reads - read_ideal) * (1.0 - p_hit) + eb * m * n;
}

SimResult simulate_isolated(const GemmShape& shape, const KernelConfig& kernel, const SimResources& res,
                            const ModelCard& card) {
  SimResult r;
  r.features = derived_features(shape, kernel, res.limits, res.cus);
  const double eff = efficiency(kernel, card);
  r.busy_s = static_cast<double>(r.features.num_wgs) * 2.0 * kernel.tile_m * kernel.tile_n *
             static_cast<double>(shape.k) / (static_cast<double>(res.cus) * res.cu_peak_flops * eff);
  r.wave_time_s = r.busy_s / r.features.waves;
  r.compute_time_s = snapped_ceil(r.features.waves) * r.wave_time_s;
  r.dram_bytes = dram_bytes(shape, kernel, r.features, res.cus, res.llc_bytes, card);
  r.mem_time_s = r.dram_bytes / res.mem_bw;
  r.runtime_s = std::max(r.compute_time_s, r.mem_time_s) + card.launch_overhead_s;
  return r;
}

SimResult simulate_isolated(const GemmShape& shape, const KernelConfig& kernel, const GpuResources& gpu,
                            const ModelCard& card) {
  return simulate_isolated(shape, kernel, SimResources::of(gpu, shape.precision), card);
}

ConcurrentResult simulate_concurrent(std::span<const SimJob> jobs, const GpuResources& gpu, const ModelCard& card) {
  check_jobs(jobs);
  const std::int64_t llc_share = gpu.llc_bytes / static_cast<std::int64_t>(jobs.size());
  if (llc_share <= 0) throw ValidationError("LLC share per job is zero");

  ConcurrentResult out;
  out.per_job.resize(jobs.size());
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    SimResources res = SimResources::of(gpu, jobs[i].shape.precision);
    res.llc_bytes = llc_share;
    out.per_job[i] = simulate_isolated(jobs[i].shape, jobs[i].kernel, res, card);
  }

  double busy = 0.0, max_wave = 0.0, dram = 0.0;
  for (std::size_t i : canonical_order(jobs)) {
    const SimResult& r = out.per_job[i];
    busy += r.busy_s;
    max_wave = std::max(max_wave, r.wave_time_s);
    dram += r.dram_bytes;
  }
  // One residual wave at the slowest per-wave time.
  out.packed_compute_s = busy + max_wave;
  out.total_mem_s = dram / gpu.mem_bw;
  out.makespan_s = std::max(out.packed_compute_s, out.total_mem_s) + card.launch_overhead_s;
  return out;
}

double simulate_sequential(std::span<const SimJob> jobs, const GpuResources& gpu, const ModelCard& card) {
  double total = 0.0;
  for (std::size_t i : canonical_order(jobs)) {
    total += simulate_isolated(jobs[i].shape, jobs[i].kernel, gpu, card).runtime_s;
  }
  return total;
}

double simulate_cu_partition(std::span<const SimJob> jobs, const GpuResources& gpu, const ModelCard& card) {
  check_jobs(jobs);
  const auto n = static_cast<std::int64_t>(jobs.size());
  GpuResources slice = partition(gpu, n, PartitionMode::CuOnly);
  slice.llc_bytes = gpu.llc_bytes / n;
  double compute = 0.0, dram = 0.0;
  for (std::size_t i : canonical_order(jobs)) {
    const SimResult r = simulate_isolated(jobs[i].shape, jobs[i].kernel, slice, card);
    compute = std::max(compute, r.compute_time_s);
    dram += r.dram_bytes;
  }
  return std::max(compute, dram / gpu.mem_bw) + card.launch_overhead_s;
}

double simulate_resource_partition(std::span<const SimJob> jobs, const GpuResources& gpu, const ModelCard& card) {
  check_jobs(jobs);
  const GpuResources slice = partition(gpu, static_cast<std::int64_t>(jobs.size()), PartitionMode::CuLlcBw);
  double makespan = 0.0;
  for (std::size_t i : canonical_order(jobs)) {
    makespan = std::max(makespan, simulate_isolated(jobs[i].shape, jobs[i].kernel, slice, card).runtime_s);
  }
  return makespan;
}

}  // namespace cogemm
