#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogemm/gpu_model.hpp"
#include "cogemm/kernel_space.hpp"
#include "cogemm/perf_sim.hpp"

namespace cogemm {

// Serial loops are the reference; Parallel runs the same sweep under OpenMP
// and must reproduce the serial result bit for bit.
enum class Exec { Serial, Parallel };

inline constexpr std::array<int, 5> kAllCds{1, 2, 4, 8, 16};
inline constexpr std::array<int, 4> kConcurrentCds{2, 4, 8, 16};

bool is_supported_cd(int cd);

struct CorpusItem {
  std::string app;
  GemmShape shape;

  bool operator==(const CorpusItem&) const = default;
};

struct KernelChoice {
  KernelId kernel = 0;
  KernelFeatures features;    // on the full GPU
  double runtime_s = 0.0;     // isolated, full GPU
  double makespan_s = 0.0;    // CD homogeneous copies, full GPU
  RcLabel source_rc = RcLabel::Full;

  bool operator==(const KernelChoice&) const = default;
};

struct GoLibraryEntry {
  GemmShape shape;
  std::vector<std::string> apps;
  // CD -> chosen kernel. per_cd[1] is the isolated-best kernel.
  std::map<int, KernelChoice> per_cd;
  bool knn_predicted = false;

  const KernelChoice& isolated() const;
  // Falls back to the isolated entry when cd is absent.
  const KernelChoice& for_cd(int cd) const;

  bool operator==(const GoLibraryEntry&) const = default;
};

struct Step1Result {
  std::map<RcLabel, KernelConfig> winners;
  std::vector<std::string> warnings;
};

/// Best isolated kernel per resource constraint; ties go to the smaller id.
Step1Result tune_step1(const GemmShape& shape, std::span<const KernelConfig> kernels, const GpuResources& gpu,
                       std::span<const ResourceConstraint> rcs, const ModelCard& card, Exec exec = Exec::Serial);

std::vector<ResourceConstraint> default_constraints();

/// Concurrent benchmarking of the step-1 candidates for every CD on the full
/// GPU. Equal makespans prefer Full, then Half, then Quarter.
GoLibraryEntry tune_step2(const GemmShape& shape, const std::map<RcLabel, KernelConfig>& candidates,
                          const GpuResources& gpu, std::span<const int> cds, const ModelCard& card);

class GoLibrary {
 public:
  GoLibrary() = default;
  GoLibrary(GpuResources gpu, ModelCard card, std::vector<KernelConfig> kernels, std::vector<GoLibraryEntry> entries);

  const GpuResources& gpu() const { return gpu_; }
  const ModelCard& card() const { return card_; }
  const std::vector<KernelConfig>& kernels() const { return kernels_; }
  const std::vector<GoLibraryEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  const GoLibraryEntry* find(const GemmShape& shape) const;
  // Throws NotFoundError for untuned shapes.
  const GoLibraryEntry& at(const GemmShape& shape) const;
  const KernelConfig& kernel(KernelId id) const;

  // Mutable access for tests exercising fallback paths.
  GoLibraryEntry& mutable_entry(const GemmShape& shape);

  bool operator==(const GoLibrary&) const = default;

 private:
  GpuResources gpu_;
  ModelCard card_;
  std::vector<KernelConfig> kernels_;      // sorted by id
  std::vector<GoLibraryEntry> entries_;    // sorted by shape
};

void to_json(nlohmann::json& j, const GoLibrary& lib);
void from_json(const nlohmann::json& j, GoLibrary& lib);
GoLibrary load_library(const std::string& path);

std::vector<CorpusItem> load_corpus(const std::string& path);
nlohmann::json corpus_to_json(std::span<const CorpusItem> corpus);

// Unique shapes in first-seen order, with the app tags of every duplicate merged.
std::vector<std::pair<GemmShape, std::vector<std::string>>> unique_shapes(std::span<const CorpusItem> corpus);

GoLibraryEntry tune_shape(const GemmShape& shape, std::span<const KernelConfig> kernels, const GpuResources& gpu,
                          const ModelCard& card);

GoLibrary build_go_library(std::span<const CorpusItem> corpus, const GpuResources& gpu,
                           std::span<const KernelConfig> kernels, const ModelCard& card, Exec exec = Exec::Parallel);

// Preferred-RC prediction from nearest tuned neighbours.

struct PrcSample {
  GemmShape shape;
  std::int64_t default_tile = 0;  // tile_m * tile_n of the isolated kernel
  std::int64_t output_size = 0;
  std::map<int, RcLabel> preferred_rc;
};

struct PrcQuery {
  std::int64_t default_tile = 0;
  std::int64_t output_size = 0;
};

PrcSample prc_sample(const GoLibraryEntry& entry, const GoLibrary& lib);

std::map<int, RcLabel> knn_predict_prc(const PrcQuery& query, std::span<const PrcSample> training, int k);

struct KnnOptions {
  double tuned_fraction = 0.2;
  int k = 3;
  std::uint64_t seed = 7;
};

/// Fully tunes a seeded sample of the corpus and fills the remaining
/// shapes' per-CD kernels from the RC their neighbours preferred.
GoLibrary build_knn_library(std::span<const CorpusItem> corpus, const GpuResources& gpu,
                            std::span<const KernelConfig> kernels, const ModelCard& card, const KnnOptions& options,
                            Exec exec = Exec::Parallel);

}  // namespace cogemm
