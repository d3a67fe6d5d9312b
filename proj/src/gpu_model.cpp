#include "cogemm/gpu_model.hpp"

#include "cogemm/error.hpp"
#include "cogemm/io.hpp"

namespace cogemm {

std::string_view to_string(Precision p) { return p == Precision::Fp16 ? "fp16" : "fp32"; }

Precision precision_from_string(std::string_view s) {
  if (s == "fp32") return Precision::Fp32;
  if (s == "fp16") return Precision::Fp16;
  throw ValidationError("unknown precision '" + std::string(s) + "'");
}

int elem_bytes(Precision p) { return p == Precision::Fp16 ? 2 : 4; }

void GpuResources::validate() const {
  auto positive = [&](bool ok, const char* field) {
    if (!ok) throw ValidationError(std::string("gpu profile '") + name + "': " + field + " must be > 0");
  };
  positive(num_cus > 0, "num_cus");
  positive(llc_bytes > 0, "llc_bytes");
  positive(mem_bw > 0, "mem_bw");
  positive(cu_peak_flops_fp32 > 0, "cu_peak_flops.fp32");
  positive(cu_peak_flops_fp16 > 0, "cu_peak_flops.fp16");
  positive(lds_per_cu > 0, "lds_per_cu");
  positive(regfile_per_cu > 0, "regfile_per_cu");
  positive(max_wgs_per_cu >= 1, "max_wgs_per_cu");
  positive(cp_clock_hz > 0, "cp_clock_hz");
  positive(cp_mem_latency_cycles > 0, "cp_mem_latency_cycles");
}

GpuResources default_gpu() {
  GpuResources g;
  g.name = "gpu";
  g.num_cus = 120;
  g.llc_bytes = 8ll << 20;
  g.mem_bw = 1.2e12;
  g.cu_peak_flops_fp32 = 1.92e11;
  g.cu_peak_flops_fp16 = 3.84e11;
  g.lds_per_cu = 64ll << 10;
  g.regfile_per_cu = 65536;
  g.max_wgs_per_cu = 8;
  g.cp_clock_hz = 1.5e9;
  g.cp_mem_latency_cycles = 31;
  return g;
}

std::string_view to_string(RcLabel rc) {
  switch (rc) {
    case RcLabel::Full: return "Full";
    case RcLabel::Half: return "Half";
    case RcLabel::Quarter: return "Quarter";
  }
  return "Full";
}

RcLabel rc_from_string(std::string_view s) {
  if (s == "Full") return RcLabel::Full;
  if (s == "Half") return RcLabel::Half;
  if (s == "Quarter") return RcLabel::Quarter;
  throw ValidationError("unknown resource constraint '" + std::string(s) + "'");
}

ResourceConstraint ResourceConstraint::from_label(RcLabel label) {
  switch (label) {
    case RcLabel::Full: return full();
    case RcLabel::Half: return half();
    case RcLabel::Quarter: return quarter();
  }
  return full();
}

GpuResources apply_constraint(const GpuResources& gpu, const ResourceConstraint& rc) {
  GpuResources out = gpu;
  out.num_cus = rc.cu_scale.scale_floor(gpu.num_cus);
  out.llc_bytes = rc.llc_scale.scale_floor(gpu.llc_bytes);
  if (out.num_cus == 0) {
    throw InvalidConstraintError("constraint " + std::string(to_string(rc.label)) + " leaves zero CUs");
  }
  if (out.llc_bytes == 0) {
    throw InvalidConstraintError("constraint " + std::string(to_string(rc.label)) + " leaves zero LLC bytes");
  }
  return out;
}

GpuResources partition(const GpuResources& gpu, std::int64_t n, PartitionMode mode) {
  if (n < 1) throw ValidationError("partition count must be >= 1");
  if (n > gpu.num_cus) throw ValidationError("partition count exceeds CU count");
  GpuResources out = gpu;
  out.num_cus = gpu.num_cus / n;
  if (mode == PartitionMode::CuLlcBw) {
    out.llc_bytes = gpu.llc_bytes / n;
    out.mem_bw = gpu.mem_bw / static_cast<double>(n);
  }
  return out;
}

void to_json(nlohmann::json& j, const GpuResources& g) {
  j = nlohmann::json{
      {"name", g.name},
      {"num_cus", g.num_cus},
      {"llc_bytes", g.llc_bytes},
      {"mem_bw", g.mem_bw},
      {"cu_peak_flops", {{"fp32", g.cu_peak_flops_fp32}, {"fp16", g.cu_peak_flops_fp16}}},
      {"lds_per_cu", g.lds_per_cu},
      {"regfile_per_cu", g.regfile_per_cu},
      {"max_wgs_per_cu", g.max_wgs_per_cu},
      {"cp_clock_hz", g.cp_clock_hz},
      {"cp_mem_latency_cycles", g.cp_mem_latency_cycles},
  };
}

void from_json(const nlohmann::json& j, GpuResources& g) {
  try {
    g.name = j.value("name", std::string("gpu"));
    g.num_cus = j.at("num_cus").get<std::int64_t>();
    g.llc_bytes = j.at("llc_bytes").get<std::int64_t>();
    g.mem_bw = j.at("mem_bw").get<double>();
    g.cu_peak_flops_fp32 = j.at("cu_peak_flops").at("fp32").get<double>();
    g.cu_peak_flops_fp16 = j.at("cu_peak_flops").at("fp16").get<double>();
    g.lds_per_cu = j.at("lds_per_cu").get<std::int64_t>();
    g.regfile_per_cu = j.at("regfile_per_cu").get<std::int64_t>();
    g.max_wgs_per_cu = j.at("max_wgs_per_cu").get<std::int64_t>();
    g.cp_clock_hz = j.at("cp_clock_hz").get<double>();
    g.cp_mem_latency_cycles = j.at("cp_mem_latency_cycles").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("gpu profile: ") + e.what());
  }
  g.validate();
}

GpuResources load_gpu(const std::string& path) { return read_json_file(path).get<GpuResources>(); }

}  // namespace cogemm
