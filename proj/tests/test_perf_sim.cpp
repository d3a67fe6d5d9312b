#include <doctest.h>

#include <vector>

#include "cogemm/error.hpp"
#include "cogemm/perf_sim.hpp"

using namespace cogemm;

// Reference values below were computed by hand from the cost model, outside
// this code base, and frozen.

namespace {

const GemmShape kShapeA{1000, 3000, 1500, false, false, Precision::Fp32};
const GemmShape kShapeB{256, 512, 64, false, false, Precision::Fp16};
KernelConfig kernel_a() { return make_kernel(128, 64, 16, 256, 2, false); }
KernelConfig kernel_b() { return make_kernel(64, 64, 8, 256, 4, true); }

}  // namespace

TEST_CASE("isolated reference: compute-bound fp32") {
  const SimResult r = simulate_isolated(kShapeA, kernel_a(), default_gpu(), ModelCard{});
  CHECK(r.features.occupancy == 5);
  CHECK(r.features.num_wgs == 376);
  CHECK(r.features.waves == doctest::Approx(0.6266666666666667).epsilon(1e-12));
  CHECK(r.wave_time_s == doctest::Approx(0.0008533333333333333).epsilon(1e-12));
  CHECK(r.compute_time_s == doctest::Approx(0.0008533333333333333).epsilon(1e-12));
  CHECK(r.dram_bytes == doctest::Approx(445152000.0).epsilon(1e-12));
  CHECK(r.mem_time_s == doctest::Approx(0.00037096).epsilon(1e-12));
  CHECK(r.runtime_s == doctest::Approx(0.0008553333333333334).epsilon(1e-12));
}

TEST_CASE("isolated reference: fp16 with a cache hit") {
  const SimResult r = simulate_isolated(kShapeB, kernel_b(), default_gpu(), ModelCard{});
  CHECK(r.features.occupancy == 4);
  CHECK(r.features.num_wgs == 32);
  CHECK(r.wave_time_s == doctest::Approx(6.24152380952381e-06).epsilon(1e-12));
  CHECK(r.dram_bytes == doctest::Approx(387072.0).epsilon(1e-12));
  CHECK(r.mem_time_s == doctest::Approx(3.2256e-07).epsilon(1e-12));
  CHECK(r.runtime_s == doctest::Approx(8.24152380952381e-06).epsilon(1e-12));
}

TEST_CASE("concurrent reference: two copies") {
  const std::vector<SimJob> jobs(2, SimJob{kShapeB, kernel_b()});
  const ConcurrentResult c = simulate_concurrent(jobs, default_gpu(), ModelCard{});
  CHECK(c.packed_compute_s == doctest::Approx(7.073726984126985e-06).epsilon(1e-12));
  CHECK(c.total_mem_s == doctest::Approx(6.894933333333333e-07).epsilon(1e-12));
  CHECK(c.makespan_s == doctest::Approx(9.073726984126985e-06).epsilon(1e-12));
  CHECK(simulate_sequential(jobs, default_gpu(), ModelCard{}) ==
        doctest::Approx(1.648304761904762e-05).epsilon(1e-12));
}

TEST_CASE("full-LLC hit leaves only ideal traffic") {
  const KernelConfig k = kernel_b();
  const KernelFeatures f = derived_features(kShapeB, k, default_gpu());
  const double ideal = 2.0 * 64 * (256 + 512) + 2.0 * 256 * 512;
  CHECK(dram_bytes(kShapeB, k, f, 120, 1ll << 40, ModelCard{}) == doctest::Approx(ideal));
}

TEST_CASE("transposed B costs extra re-reads when the cache misses") {
  GemmShape t = kShapeA;
  t.trans_b = true;
  const KernelConfig k = kernel_a();
  const KernelFeatures f = derived_features(kShapeA, k, default_gpu());
  CHECK(dram_bytes(t, k, f, 120, 1, ModelCard{}) > dram_bytes(kShapeA, k, f, 120, 1, ModelCard{}));
}

TEST_CASE("concurrent input validation") {
  const std::vector<SimJob> none;
  CHECK_THROWS_AS(simulate_concurrent(none, default_gpu(), ModelCard{}), ValidationError);
  const std::vector<SimJob> many(17, SimJob{kShapeB, kernel_b()});
  CHECK_THROWS_AS(simulate_concurrent(many, default_gpu(), ModelCard{}), ValidationError);
}

TEST_CASE("partitioned baselines") {
  const std::vector<SimJob> jobs(4, SimJob{kShapeA, kernel_a()});
  const GpuResources gpu = default_gpu();
  const double cu = simulate_cu_partition(jobs, gpu, ModelCard{});
  const double res = simulate_resource_partition(jobs, gpu, ModelCard{});
  const SimResult slice = simulate_isolated(kShapeA, kernel_a(), partition(gpu, 4, PartitionMode::CuLlcBw), ModelCard{});
  CHECK(res == slice.runtime_s);
  CHECK(cu > 0.0);
  CHECK(cu <= res + 1e-15);
}

TEST_CASE("model card validation") {
  ModelCard c;
  c.coalesce_penalty = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = ModelCard{};
  c.trans_b_read_penalty = 0.5;
  CHECK_THROWS_AS(nlohmann::json(c).get<ModelCard>(), ValidationError);
  const ModelCard shipped = load_model_card(std::string(COGEMM_DATA_DIR) + "/model_card.json");
  CHECK(shipped == ModelCard{});
}
