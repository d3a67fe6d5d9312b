#include <doctest.h>

#include <algorithm>
#include <limits>
#include <vector>

#include "cogemm/error.hpp"
#include "cogemm/tuner.hpp"

using namespace cogemm;

namespace {

std::vector<KernelConfig> small_space() {
  SpaceBounds b;
  b.tile_m = {32, 64, 128};
  b.tile_n = {32, 64, 128};
  b.unroll_k = {8};
  b.coalesce_width = {1, 4};
  return enumerate_kernels(b, default_gpu());
}

std::vector<CorpusItem> small_corpus() {
  return {{"a", {128, 4096, 1024, false, false, Precision::Fp32}},
          {"a", {512, 512, 512, false, true, Precision::Fp16}},
          {"b", {128, 4096, 1024, false, false, Precision::Fp32}},
          {"b", {2048, 1024, 256, true, false, Precision::Fp32}},
          {"c", {64, 1024, 4096, false, false, Precision::Fp16}},
          {"c", {4096, 4096, 64, false, false, Precision::Fp32}}};
}

}  // namespace

TEST_CASE("step 1 picks the fastest valid kernel under each constraint") {
  const auto ks = small_space();
  const GpuResources gpu = default_gpu();
  const GemmShape s{1000, 3000, 1500, false, false, Precision::Fp32};
  const auto rcs = default_constraints();
  const Step1Result r = tune_step1(s, ks, gpu, rcs, ModelCard{});
  REQUIRE(r.winners.size() == 3);
  for (const auto& rc : rcs) {
    const GpuResources g = apply_constraint(gpu, rc);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& k : ks) best = std::min(best, simulate_isolated(s, k, g, ModelCard{}).runtime_s);
    CHECK(simulate_isolated(s, r.winners.at(rc.label), g, ModelCard{}).runtime_s == best);
  }
}

TEST_CASE("step 1 skips constraints the GPU cannot satisfy") {
  GpuResources gpu = default_gpu();
  gpu.num_cus = 3;
  const auto rcs = default_constraints();
  const Step1Result r = tune_step1({256, 256, 256, false, false, Precision::Fp32}, small_space(), gpu, rcs,
                                   ModelCard{});
  CHECK(r.winners.count(RcLabel::Quarter) == 0);
  CHECK(r.winners.count(RcLabel::Full) == 1);
  CHECK(r.warnings.size() == 1);
}

TEST_CASE("GO kernels never lose to the isolated kernel under concurrency") {
  const auto ks = small_space();
  const GpuResources gpu = default_gpu();
  for (const auto& item : small_corpus()) {
    const GoLibraryEntry e = tune_shape(item.shape, ks, gpu, ModelCard{});
    const KernelConfig* iso = nullptr;
    for (const auto& k : ks)
      if (k.id == e.isolated().kernel) iso = &k;
    REQUIRE(iso != nullptr);
    for (int cd : kConcurrentCds) {
      const std::vector<SimJob> jobs(static_cast<std::size_t>(cd), SimJob{item.shape, *iso});
      CHECK(e.per_cd.at(cd).makespan_s <= simulate_concurrent(jobs, gpu, ModelCard{}).makespan_s);
    }
    CHECK(e.per_cd.size() == 5);
  }
}

TEST_CASE("step 2 rejects unsupported CDs") {
  const std::map<RcLabel, KernelConfig> cands{{RcLabel::Full, make_kernel(64, 64, 8, 256, 1, false)}};
  const std::vector<int> bad{3};
  CHECK_THROWS_AS(tune_step2({64, 64, 64, false, false, Precision::Fp32}, cands, default_gpu(), bad, ModelCard{}),
                  ValidationError);
  CHECK_THROWS_AS(tune_step2({64, 64, 64, false, false, Precision::Fp32}, {}, default_gpu(), kConcurrentCds,
                             ModelCard{}),
                  ValidationError);
}

TEST_CASE("library build is deterministic and sorted") {
  const auto ks = small_space();
  const auto corpus = small_corpus();
  const GoLibrary serial = build_go_library(corpus, default_gpu(), ks, ModelCard{}, Exec::Serial);
  const GoLibrary parallel = build_go_library(corpus, default_gpu(), ks, ModelCard{}, Exec::Parallel);
  CHECK(serial == parallel);
  CHECK(serial.size() == 5);
  CHECK(std::is_sorted(serial.entries().begin(), serial.entries().end(),
                       [](const auto& a, const auto& b) { return a.shape < b.shape; }));
  const auto& shared = serial.at({128, 4096, 1024, false, false, Precision::Fp32});
  CHECK(shared.apps == std::vector<std::string>{"a", "b"});
  CHECK_THROWS_AS(serial.at({1, 2, 3, false, false, Precision::Fp32}), NotFoundError);
  CHECK(serial.find({1, 2, 3, false, false, Precision::Fp32}) == nullptr);
}

TEST_CASE("library json round trip") {
  const GoLibrary lib = build_go_library(small_corpus(), default_gpu(), small_space(), ModelCard{}, Exec::Serial);
  const nlohmann::json j = lib;
  CHECK(j.get<GoLibrary>() == lib);
  CHECK(nlohmann::json::parse(j.dump()).get<GoLibrary>() == lib);
}

TEST_CASE("nearest neighbours vote on the preferred constraint") {
  std::vector<PrcSample> train(3);
  train[0].default_tile = 4096;
  train[0].output_size = 1000;
  train[0].preferred_rc = {{2, RcLabel::Half}};
  train[1].default_tile = 4096;
  train[1].output_size = 1100;
  train[1].preferred_rc = {{2, RcLabel::Full}};
  train[2].default_tile = 4096;
  train[2].output_size = 100000;
  train[2].preferred_rc = {{2, RcLabel::Full}};

  CHECK(knn_predict_prc({4096, 990}, train, 1).at(2) == RcLabel::Half);
  // 1-1 tie at k=2: the closer vote wins.
  CHECK(knn_predict_prc({4096, 990}, train, 2).at(2) == RcLabel::Half);
  CHECK(knn_predict_prc({4096, 990}, train, 3).at(2) == RcLabel::Full);
  CHECK_THROWS_AS(knn_predict_prc({4096, 990}, train, 4), ValidationError);
  CHECK_THROWS_AS(knn_predict_prc({4096, 990}, {}, 1), ValidationError);
}

TEST_CASE("a fully tuned KNN library equals the plain build") {
  const auto ks = small_space();
  const auto corpus = small_corpus();
  const GoLibrary full = build_go_library(corpus, default_gpu(), ks, ModelCard{}, Exec::Serial);
  KnnOptions all;
  all.tuned_fraction = 1.0;
  CHECK(build_knn_library(corpus, default_gpu(), ks, ModelCard{}, all, Exec::Serial) == full);

  KnnOptions some;
  some.tuned_fraction = 0.4;
  some.k = 1;
  const GoLibrary a = build_knn_library(corpus, default_gpu(), ks, ModelCard{}, some, Exec::Serial);
  const GoLibrary b = build_knn_library(corpus, default_gpu(), ks, ModelCard{}, some, Exec::Parallel);
  CHECK(a == b);
  CHECK(std::count_if(a.entries().begin(), a.entries().end(), [](const auto& e) { return e.knn_predicted; }) == 3);
  for (const auto& e : a.entries()) {
    CHECK(e.isolated().kernel == full.at(e.shape).isolated().kernel);
  }
  some.tuned_fraction = 0.0;
  CHECK_THROWS_AS(build_knn_library(corpus, default_gpu(), ks, ModelCard{}, some), ValidationError);
}
