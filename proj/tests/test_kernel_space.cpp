#include <doctest.h>

#include <algorithm>

#include "cogemm/error.hpp"
#include "cogemm/kernel_space.hpp"

using namespace cogemm;

TEST_CASE("derived features of a square GEMM") {
  const GpuResources gpu = default_gpu();
  const GemmShape s{4096, 4096, 1024, false, false, Precision::Fp32};
  // 32 KiB of double-buffered LDS per WG: two fit in 64 KiB.
  const KernelConfig k = make_kernel(128, 128, 16, 256, 4, true);
  const KernelFeatures f = derived_features(s, k, gpu);
  CHECK(f.num_wgs == 1024);
  CHECK(f.occupancy == 2);
  CHECK(f.waves == doctest::Approx(1024.0 / 240.0));
}

TEST_CASE("partial tiles count as whole workgroups") {
  const GpuResources gpu = default_gpu();
  const GemmShape s{1000, 3000, 64, false, false, Precision::Fp32};
  const KernelFeatures f = derived_features(s, make_kernel(128, 64, 16, 256, 2, false), gpu);
  CHECK(f.num_wgs == 8 * 47);
}

TEST_CASE("occupancy is bounded by every per-CU limit") {
  const CuLimits limits{64 << 10, 65536, 8};
  CHECK(occupancy(make_kernel(32, 32, 8, 256, 1, false), 4, limits) == 6);  // registers
  CHECK(occupancy(make_kernel(256, 256, 16, 256, 1, true), 4, limits) == 1);  // LDS
  CHECK(occupancy(make_kernel(32, 32, 8, 256, 1, false), 4, {64 << 10, 1 << 20, 8}) == 8);
  CHECK_FALSE(is_valid(make_kernel(256, 256, 16, 256, 4, true), 4, {32 << 10, 65536, 8}));
}

TEST_CASE("zero occupancy is an error") {
  GpuResources gpu = default_gpu();
  gpu.regfile_per_cu = 1024;
  const GemmShape s{256, 256, 256, false, false, Precision::Fp32};
  CHECK_THROWS_AS(derived_features(s, make_kernel(64, 64, 8, 256, 1, false), gpu), KernelInvalidError);
}

TEST_CASE("default space is sorted, unique and sized sensibly") {
  const GpuResources gpu = default_gpu();
  const auto ks = enumerate_kernels(SpaceBounds{}, gpu);
  CHECK(ks.size() >= 64);
  CHECK(ks.size() <= 512);
  CHECK(std::is_sorted(ks.begin(), ks.end(), [](const auto& a, const auto& b) { return a.id < b.id; }));
  CHECK(std::adjacent_find(ks.begin(), ks.end(), [](const auto& a, const auto& b) { return a.id == b.id; }) ==
        ks.end());
  for (const auto& k : ks) CHECK(is_valid(k, 4, CuLimits::of(gpu)));
}

TEST_CASE("a space with nothing that fits is rejected") {
  GpuResources gpu = default_gpu();
  gpu.lds_per_cu = 1024;
  CHECK_THROWS_AS(enumerate_kernels(SpaceBounds{}, gpu), EmptySpaceError);
  SpaceBounds b;
  b.tile_m.clear();
  CHECK_THROWS_AS(enumerate_kernels(b, default_gpu()), ValidationError);
}

TEST_CASE("kernel ids are order-preserving and independent of the bounds") {
  const KernelConfig a = make_kernel(64, 64, 8, 256, 1, false);
  const KernelConfig b = make_kernel(64, 64, 8, 256, 1, true);
  const KernelConfig c = make_kernel(128, 32, 8, 256, 1, false);
  CHECK(a.id < b.id);
  CHECK(b.id < c.id);
  SpaceBounds other;
  other.vgpr_base = 16;
  CHECK(make_kernel(64, 64, 8, 256, 1, false, other).id == a.id);
}

TEST_CASE("shape keys") {
  const GemmShape s{128, 4096, 1024, false, true, Precision::Fp16};
  CHECK(s.key() == "128_4096_1024_01_fp16");
  CHECK(GemmShape::from_key(s.key()) == s);
  CHECK_THROWS_AS(GemmShape::from_key("128_4096"), ValidationError);
  CHECK_THROWS_AS(GemmShape::from_key("0_1_1_00_fp32"), ValidationError);
}

TEST_CASE("json round trips") {
  const KernelConfig k = make_kernel(128, 64, 16, 256, 2, true);
  CHECK(nlohmann::json(k).get<KernelConfig>() == k);
  const GemmShape s{3, 5, 7, true, false, Precision::Fp16};
  CHECK(nlohmann::json(s).get<GemmShape>() == s);
  const SpaceBounds b = load_space_bounds(std::string(COGEMM_DATA_DIR) + "/space_default.json");
  CHECK(nlohmann::json(b).get<SpaceBounds>().tile_m == b.tile_m);
}
