#include "cogemm/kernel_space.hpp"

#include <algorithm>
#include <bit>
#include <sstream>

#include "cogemm/error.hpp"
#include "cogemm/io.hpp"

namespace cogemm {

namespace {

bool is_pow2(int v) { return v > 0 && std::has_single_bit(static_cast<unsigned>(v)); }

unsigned log2u(int v) { return static_cast<unsigned>(std::bit_width(static_cast<unsigned>(v)) - 1); }

void require_pow2_list(const std::vector<int>& values, const char* field) {
  if (values.empty()) throw ValidationError(std::string("space bounds: '") + field + "' is empty");
  for (int v : values) {
    if (!is_pow2(v)) throw ValidationError(std::string("space bounds: '") + field + "' value " + std::to_string(v) +
                                           " is not a power of two");
  }
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace

std::string GemmShape::key() const {
  std::ostringstream ss;
  ss << m << '_' << n << '_' << k << '_' << (trans_a ? '1' : '0') << (trans_b ? '1' : '0') << '_'
     << to_string(precision);
  return ss.str();
}

GemmShape GemmShape::from_key(const std::string& key) {
  GemmShape s;
  std::istringstream ss(key);
  std::string part[5];
  for (int i = 0; i < 5; ++i) {
    if (!std::getline(ss, part[i], '_')) throw ValidationError("malformed shape key '" + key + "'");
  }
  try {
    s.m = std::stoll(part[0]);
    s.n = std::stoll(part[1]);
    s.k = std::stoll(part[2]);
  } catch (const std::exception&) {
    throw ValidationError("malformed shape key '" + key + "'");
  }
  if (part[3].size() != 2 || (part[3][0] != '0' && part[3][0] != '1') || (part[3][1] != '0' && part[3][1] != '1')) {
    throw ValidationError("malformed transpose field in shape key '" + key + "'");
  }
  s.trans_a = part[3][0] == '1';
  s.trans_b = part[3][1] == '1';
  s.precision = precision_from_string(part[4]);
  s.validate();
  return s;
}

void GemmShape::validate() const {
  if (m < 1 || n < 1 || k < 1) throw ValidationError("GEMM dimensions must be >= 1 (" + key() + ")");
}

KernelId make_kernel_id(int tile_m, int tile_n, int unroll_k, int threads_per_wg, int coalesce_width, bool prefetch) {
  return (log2u(tile_m) << 20) | (log2u(tile_n) << 16) | (log2u(unroll_k) << 12) | (log2u(threads_per_wg) << 8) |
         (log2u(coalesce_width) << 4) | (prefetch ? 1u : 0u);
}

std::string KernelConfig::name() const {
  std::ostringstream ss;
  ss << "MT" << tile_m << 'x' << tile_n << "_UK" << unroll_k << "_T" << threads_per_wg << "_C" << coalesce_width
     << "_PF" << (prefetch ? 1 : 0);
  return ss.str();
}

void SpaceBounds::validate() const {
  require_pow2_list(tile_m, "tile_m");
  require_pow2_list(tile_n, "tile_n");
  require_pow2_list(unroll_k, "unroll_k");
  require_pow2_list(threads_per_wg, "threads_per_wg");
  require_pow2_list(coalesce_width, "coalesce_width");
  if (prefetch.empty()) throw ValidationError("space bounds: 'prefetch' is empty");
  if (elem_bytes != 2 && elem_bytes != 4) throw ValidationError("space bounds: elem_bytes must be 2 or 4");
  if (vgpr_base < 1 || vgpr_per_coalesce < 0) throw ValidationError("space bounds: bad vgpr model");
}

KernelConfig make_kernel(int tile_m, int tile_n, int unroll_k, int threads_per_wg, int coalesce_width, bool prefetch,
                         const SpaceBounds& bounds) {
  if (!is_pow2(tile_m) || !is_pow2(tile_n) || !is_pow2(unroll_k) || !is_pow2(threads_per_wg) ||
      !is_pow2(coalesce_width)) {
    throw ValidationError("kernel parameters must be powers of two");
  }
  KernelConfig k;
  k.tile_m = tile_m;
  k.tile_n = tile_n;
  k.unroll_k = unroll_k;
  k.threads_per_wg = threads_per_wg;
  k.coalesce_width = coalesce_width;
  k.prefetch = prefetch;
  k.vgpr_per_thread = bounds.vgpr_base + bounds.vgpr_per_coalesce * coalesce_width;
  k.id = make_kernel_id(tile_m, tile_n, unroll_k, threads_per_wg, coalesce_width, prefetch);
  return k;
}

std::int64_t occupancy(const KernelConfig& kernel, int elem_bytes, const CuLimits& limits) {
  const std::int64_t lds = kernel.lds_bytes(elem_bytes);
  const std::int64_t regs = kernel.regs_per_wg();
  if (lds <= 0 || regs <= 0) return 0;
  return std::min({limits.max_wgs_per_cu, limits.lds_per_cu / lds, limits.regfile_per_cu / regs});
}

bool is_valid(const KernelConfig& kernel, int elem_bytes, const CuLimits& limits) {
  return kernel.lds_bytes(elem_bytes) <= limits.lds_per_cu && occupancy(kernel, elem_bytes, limits) >= 1;
}

std::vector<KernelConfig> enumerate_kernels(const SpaceBounds& bounds, const GpuResources& gpu) {
  bounds.validate();
  const CuLimits limits = CuLimits::of(gpu);
  std::vector<KernelConfig> out;
  for (int tm : bounds.tile_m)
    for (int tn : bounds.tile_n)
      for (int uk : bounds.unroll_k)
        for (int th : bounds.threads_per_wg)
          for (int cw : bounds.coalesce_width)
            for (bool pf : bounds.prefetch) {
              KernelConfig k = make_kernel(tm, tn, uk, th, cw, pf, bounds);
              if (is_valid(k, bounds.elem_bytes, limits)) out.push_back(k);
            }
  std::sort(out.begin(), out.end(), [](const KernelConfig& a, const KernelConfig& b) { return a.id < b.id; });
  out.erase(std::unique(out.begin(), out.end(), [](const KernelConfig& a, const KernelConfig& b) { return a.id == b.id; }),
            out.end());
  if (out.empty()) throw EmptySpaceError("no kernel in the space bounds fits the GPU '" + gpu.name + "'");
  return out;
}

KernelFeatures derived_features(const GemmShape& shape, const KernelConfig& kernel, const CuLimits& limits,
                                std::int64_t num_cus) {
  KernelFeatures f;
  f.num_wgs = ceil_div(shape.m, kernel.tile_m) * ceil_div(shape.n, kernel.tile_n);
  f.occupancy = occupancy(kernel, shape.elem_bytes(), limits);
  if (f.occupancy < 1) throw KernelInvalidError("kernel " + kernel.name() + " has zero occupancy");
  f.waves = static_cast<double>(f.num_wgs) / static_cast<double>(f.occupancy * num_cus);
  return f;
}

KernelFeatures derived_features(const GemmShape& shape, const KernelConfig& kernel, const GpuResources& gpu) {
  return derived_features(shape, kernel, CuLimits::of(gpu), gpu.num_cus);
}

void to_json(nlohmann::json& j, const GemmShape& s) {
  j = nlohmann::json{{"m", s.m},
                     {"n", s.n},
                     {"k", s.k},
                     {"trans_a", s.trans_a},
                     {"trans_b", s.trans_b},
                     {"precision", std::string(to_string(s.precision))}};
}

void from_json(const nlohmann::json& j, GemmShape& s) {
  try {
    s.m = j.at("m").get<std::int64_t>();
    s.n = j.at("n").get<std::int64_t>();
    s.k = j.at("k").get<std::int64_t>();
    s.trans_a = j.value("trans_a", false);
    s.trans_b = j.value("trans_b", false);
    s.precision = precision_from_string(j.value("precision", std::string("fp32")));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("shape: ") + e.what());
  }
  s.validate();
}

void to_json(nlohmann::json& j, const KernelConfig& k) {
  j = nlohmann::json{{"id", k.id},
                     {"name", k.name()},
                     {"tile_m", k.tile_m},
                     {"tile_n", k.tile_n},
                     {"unroll_k", k.unroll_k},
                     {"threads_per_wg", k.threads_per_wg},
                     {"coalesce_width", k.coalesce_width},
                     {"prefetch", k.prefetch},
                     {"vgpr_per_thread", k.vgpr_per_thread}};
}

void from_json(const nlohmann::json& j, KernelConfig& k) {
  try {
    SpaceBounds defaults;
    k = make_kernel(j.at("tile_m").get<int>(), j.at("tile_n").get<int>(), j.at("unroll_k").get<int>(),
                    j.at("threads_per_wg").get<int>(), j.at("coalesce_width").get<int>(), j.at("prefetch").get<bool>(),
                    defaults);
    k.vgpr_per_thread = j.at("vgpr_per_thread").get<int>();
    if (j.contains("id") && j.at("id").get<KernelId>() != k.id) {
      throw ValidationError("kernel id does not match its parameters (" + k.name() + ")");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("kernel: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const KernelFeatures& f) {
  j = nlohmann::json{{"num_wgs", f.num_wgs}, {"occupancy", f.occupancy}, {"waves", f.waves}};
}

void from_json(const nlohmann::json& j, KernelFeatures& f) {
  f.num_wgs = j.at("num_wgs").get<std::int64_t>();
  f.occupancy = j.at("occupancy").get<std::int64_t>();
  f.waves = j.at("waves").get<double>();
}

void to_json(nlohmann::json& j, const SpaceBounds& b) {
  j = nlohmann::json{{"tile_m", b.tile_m},
                     {"tile_n", b.tile_n},
                     {"unroll_k", b.unroll_k},
                     {"threads_per_wg", b.threads_per_wg},
                     {"coalesce_width", b.coalesce_width},
                     {"prefetch", b.prefetch},
                     {"elem_bytes", b.elem_bytes},
                     {"vgpr_base", b.vgpr_base},
                     {"vgpr_per_coalesce", b.vgpr_per_coalesce}};
}

void from_json(const nlohmann::json& j, SpaceBounds& b) {
  SpaceBounds d;
  try {
    b.tile_m = j.value("tile_m", d.tile_m);
    b.tile_n = j.value("tile_n", d.tile_n);
    b.unroll_k = j.value("unroll_k", d.unroll_k);
    b.threads_per_wg = j.value("threads_per_wg", d.threads_per_wg);
    b.coalesce_width = j.value("coalesce_width", d.coalesce_width);
    b.prefetch = j.value("prefetch", d.prefetch);
    b.elem_bytes = j.value("elem_bytes", d.elem_bytes);
    b.vgpr_base = j.value("vgpr_base", d.vgpr_base);
    b.vgpr_per_coalesce = j.value("vgpr_per_coalesce", d.vgpr_per_coalesce);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("space bounds: ") + e.what());
  }
  b.validate();
}

SpaceBounds load_space_bounds(const std::string& path) { return read_json_file(path).get<SpaceBounds>(); }

}  // namespace cogemm
