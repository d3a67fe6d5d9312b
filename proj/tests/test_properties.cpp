#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cogemm/command_processor.hpp"
#include "cogemm/perf_sim.hpp"
#include "cogemm/predictor.hpp"
#include "cogemm/rng.hpp"
#include "support/fixtures.hpp"

using namespace cogemm;
using namespace cogemm::testing;

// Randomized invariants. Every generator is seeded so failures reproduce.

namespace {

constexpr int kCases = 200;

std::int64_t log_uniform(Rng& rng, std::int64_t lo, std::int64_t hi) {
  const double v = std::exp(rng.uniform(std::log(static_cast<double>(lo)), std::log(static_cast<double>(hi))));
  return std::clamp<std::int64_t>(std::llround(v), lo, hi);
}

GemmShape random_shape(Rng& rng) {
  GemmShape s;
  s.m = log_uniform(rng, 16, 8192);
  s.n = log_uniform(rng, 16, 8192);
  s.k = log_uniform(rng, 16, 8192);
  s.trans_a = rng.index(2) == 1;
  s.trans_b = rng.index(2) == 1;
  s.precision = rng.index(2) ? Precision::Fp16 : Precision::Fp32;
  return s;
}

const std::vector<KernelConfig>& space() {
  static const std::vector<KernelConfig> ks = enumerate_kernels(SpaceBounds{}, default_gpu());
  return ks;
}

const KernelConfig& random_kernel(Rng& rng) { return space()[rng.index(space().size())]; }

}  // namespace

TEST_CASE("property: more cache or bandwidth never slows a kernel") {
  Rng rng(101);
  const GpuResources gpu = default_gpu();
  for (int i = 0; i < kCases; ++i) {
    const GemmShape s = random_shape(rng);
    const KernelConfig& k = random_kernel(rng);
    GpuResources more_llc = gpu, more_bw = gpu;
    more_llc.llc_bytes *= 2 + static_cast<std::int64_t>(rng.index(4));
    more_bw.mem_bw *= rng.uniform(1.0, 4.0);
    const double base = simulate_isolated(s, k, gpu, ModelCard{}).runtime_s;
    CHECK(simulate_isolated(s, k, more_llc, ModelCard{}).runtime_s <= base);
    CHECK(simulate_isolated(s, k, more_bw, ModelCard{}).runtime_s <= base);
  }
}

// Total runtime is not monotone in CUs: more resident workgroups enlarge the
// cache footprint. Compute time alone is.
TEST_CASE("property: more CUs never increase compute time") {
  Rng rng(102);
  for (int i = 0; i < kCases; ++i) {
    const GemmShape s = random_shape(rng);
    const KernelConfig& k = random_kernel(rng);
    GpuResources a = default_gpu(), b = a;
    a.num_cus = 1 + static_cast<std::int64_t>(rng.index(120));
    b.num_cus = a.num_cus + 1 + static_cast<std::int64_t>(rng.index(64));
    CHECK(simulate_isolated(s, k, b, ModelCard{}).compute_time_s <=
          simulate_isolated(s, k, a, ModelCard{}).compute_time_s * (1 + 1e-12));
  }
}

TEST_CASE("property: traffic is at least the ideal traffic") {
  Rng rng(103);
  const GpuResources gpu = default_gpu();
  for (int i = 0; i < kCases; ++i) {
    const GemmShape s = random_shape(rng);
    const KernelConfig& k = random_kernel(rng);
    const KernelFeatures f = derived_features(s, k, gpu);
    const double eb = s.elem_bytes();
    const double ideal = eb * (static_cast<double>(s.k) * static_cast<double>(s.m + s.n) +
                               static_cast<double>(s.m) * static_cast<double>(s.n));
    const auto llc = static_cast<std::int64_t>(log_uniform(rng, 1, 1ll << 30));
    CHECK(dram_bytes(s, k, f, gpu.num_cus, llc, ModelCard{}) >= ideal * (1 - 1e-12));
  }
}

TEST_CASE("property: concurrent results ignore job order") {
  Rng rng(104);
  const GpuResources gpu = default_gpu();
  for (int i = 0; i < kCases / 4; ++i) {
    std::vector<SimJob> jobs(1 + rng.index(16));
    for (auto& j : jobs) j = SimJob{random_shape(rng), random_kernel(rng)};
    const ConcurrentResult a = simulate_concurrent(jobs, gpu, ModelCard{});
    rng.shuffle(jobs);
    const ConcurrentResult b = simulate_concurrent(jobs, gpu, ModelCard{});
    CHECK(a.makespan_s == b.makespan_s);
    CHECK(a.packed_compute_s == b.packed_compute_s);
    CHECK(simulate_sequential(jobs, gpu, ModelCard{}) == simulate_sequential(jobs, gpu, ModelCard{}));
  }
}

TEST_CASE("property: co-running jobs finish no sooner than the slowest alone") {
  Rng rng(105);
  const GpuResources gpu = default_gpu();
  for (int i = 0; i < kCases / 4; ++i) {
    std::vector<SimJob> jobs(1 + rng.index(16));
    for (auto& j : jobs) j = SimJob{random_shape(rng), random_kernel(rng)};
    double slowest = 0.0;
    for (const auto& j : jobs) slowest = std::max(slowest, simulate_isolated(j.shape, j.kernel, gpu, ModelCard{}).runtime_s);
    CHECK(simulate_concurrent(jobs, gpu, ModelCard{}).makespan_s >= slowest * (1 - 1e-12));
  }
}

TEST_CASE("property: packing never inflates pure compute") {
  Rng rng(114);
  const GpuResources gpu = default_gpu();
  for (int i = 0; i < kCases / 4; ++i) {
    std::vector<SimJob> jobs(1 + rng.index(16));
    for (auto& j : jobs) j = SimJob{random_shape(rng), random_kernel(rng)};
    double compute = 0.0, max_wave = 0.0;
    for (const auto& j : jobs) {
      const SimResult r = simulate_isolated(j.shape, j.kernel, gpu, ModelCard{});
      compute += r.compute_time_s;
      max_wave = std::max(max_wave, r.wave_time_s);
    }
    CHECK(simulate_concurrent(jobs, gpu, ModelCard{}).packed_compute_s <= (compute + max_wave) * (1 + 1e-12));
  }
}

TEST_CASE("property: softmax is a distribution and shift invariant") {
  Rng rng(106);
  for (int i = 0; i < kCases; ++i) {
    std::array<double, kNumClasses> s{};
    for (auto& v : s) v = rng.uniform(-50, 50);
    const Prediction p = softmax_prediction(s);
    double sum = 0;
    for (double q : p.probabilities) {
      CHECK(q >= 0.0);
      sum += q;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    const double shift = rng.uniform(-1e3, 1e3);
    for (auto& v : s) v += shift;
    const Prediction q = softmax_prediction(s);
    for (std::size_t c = 0; c < kNumClasses; ++c) CHECK(q.probabilities[c] == doctest::Approx(p.probabilities[c]).epsilon(1e-9));
    CHECK(std::find(kAllCds.begin(), kAllCds.end(), p.cd) != kAllCds.end());
  }
}

TEST_CASE("property: normalized features stay in the unit box") {
  Rng rng(107);
  std::vector<FeatureVector> xs(20);
  for (auto& x : xs)
    for (auto& v : x) v = rng.uniform(-10, 10);
  const NormBounds b = fit_bounds(xs);
  for (int i = 0; i < kCases; ++i) {
    FeatureVector x{};
    for (auto& v : x) v = rng.uniform(-20, 20);
    for (double v : normalize(x, b)) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("property: effective CD is supported and within reach") {
  for (int p = -2; p <= 20; ++p)
    for (int a = 0; a <= 20; ++a) {
      const int cd = effective_cd(p, a);
      CHECK(is_supported_cd(cd));
      if (p >= 1 && a >= 1) CHECK(cd <= std::min(p, a));
    }
}

TEST_CASE("property: shape keys round-trip") {
  Rng rng(108);
  for (int i = 0; i < kCases; ++i) {
    const GemmShape s = random_shape(rng);
    CHECK(GemmShape::from_key(s.key()) == s);
  }
}

namespace {

const std::vector<GemmShape>& lib_shapes() {
  static const std::vector<GemmShape> v{kSmall, kSquare, kWide};
  return v;
}

Trace random_trace(Rng& rng) {
  Trace t;
  const std::size_t queues = 1 + rng.index(8);
  const std::size_t len = 1 + rng.index(24);
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t q = rng.index(queues);
    if (rng.index(5) == 0) {
      t.push_back({q, NonGemmWork{rng.uniform(0.0, 2e-5)}});
    } else {
      t.push_back({q, GemmWork{lib_shapes()[rng.index(lib_shapes().size())]}});
    }
  }
  return t;
}

}  // namespace

TEST_CASE("property: timelines account for every packet and every picosecond") {
  Rng rng(109);
  const GoLibrary& lib = small_library();
  for (int i = 0; i < 60; ++i) {
    const Trace t = random_trace(rng);
    const FixedChooser c(kAllCds[rng.index(kAllCds.size())]);
    for (Policy p : {Policy::Sequential, Policy::Default, Policy::GoKernels, Policy::Dynamic, Policy::CuPartition,
                     Policy::ResourcePartition}) {
      const TimelineResult r = timeline(t, lib, {p, &c, CpTiming{}});
      Picos now = 0, exposed = 0;
      std::size_t packets = 0;
      for (const auto& b : r.batches) {
        now += b.exposed_overhead_ps;
        CHECK(b.start_ps == now);
        CHECK(b.exposed_overhead_ps <= to_picos(CpTiming{}.total_decision_s));
        now += b.runtime_ps;
        exposed += b.exposed_overhead_ps;
        packets += b.events.size() + b.non_gemm.size();
        CHECK(b.events.size() <= kMaxConcurrentJobs);
      }
      CHECK(now == r.end_to_end_ps);
      CHECK(exposed == r.exposed_overhead_ps);
      CHECK(packets == t.size());
      if (p != Policy::Dynamic) CHECK(r.exposed_overhead_ps == 0);
    }
  }
}

TEST_CASE("property: the oracle beats every uniform CD") {
  Rng rng(110);
  const GoLibrary& lib = small_library();
  for (int i = 0; i < 15; ++i) {
    const Trace t = random_trace(rng);
    const Picos best = oracle_timeline(t, lib, CpTiming{}).timeline.end_to_end_ps;
    for (int cd : kAllCds) {
      const FixedChooser c(cd);
      CHECK(best <= timeline(t, lib, {Policy::Dynamic, &c, CpTiming{}}).end_to_end_ps);
    }
  }
}

TEST_CASE("property: traces round-trip through json") {
  Rng rng(111);
  for (int i = 0; i < 50; ++i) {
    const Trace t = random_trace(rng);
    CHECK(trace_from_json(nlohmann::json::parse(trace_to_json(t).dump())) == t);
  }
}

TEST_CASE("property: datasets round-trip through csv") {
  Rng rng(112);
  std::vector<ProfileRecord> recs(30);
  for (auto& r : recs) {
    r.shape = random_shape(rng);
    r.apps = {"app" + std::to_string(rng.index(3))};
    for (auto& v : r.x) v = rng.uniform(0, 1e6);
    for (int cd : kConcurrentCds) r.speedup[cd] = rng.uniform(0.5, 2.0);
    r.label = label_from_speedups(r.speedup);
  }
  CHECK(dataset_from_csv(dataset_to_csv(recs)) == recs);
}

TEST_CASE("property: picosecond conversion is exact to the picosecond") {
  Rng rng(113);
  for (int i = 0; i < kCases; ++i) {
    const auto ps = static_cast<Picos>(rng.index(1ull << 40));
    CHECK(to_picos(to_seconds(ps)) == ps);
  }
}
