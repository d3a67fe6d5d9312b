#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogemm/command_processor.hpp"
#include "cogemm/predictor.hpp"
#include "cogemm/report.hpp"
#include "cogemm/tuner.hpp"

namespace cogemm {

struct CorpusRanges {
  std::int64_t output_min = 32 * 1024;
  std::int64_t output_max = 168ll * 1024 * 1024;
  std::int64_t k_min = 64;
  std::int64_t k_max = 20 * 1024;

  void validate() const;
  bool contains(const GemmShape& s) const;
};

/// Dimension expressions are products of integer literals and parameter
/// names, e.g. "4*H".
struct ShapeTemplate {
  std::string name;
  std::string m, n, k;
  bool trans_a = false;
  bool trans_b = false;
};

struct NetworkSpec {
  std::string app;
  std::string family;
  std::map<std::string, std::vector<std::int64_t>> params;
};

struct CorpusSpec {
  std::uint64_t seed = 7;
  std::vector<Precision> precisions{Precision::Fp32};
  CorpusRanges ranges;
  std::vector<NetworkSpec> networks;
  std::map<std::string, std::vector<ShapeTemplate>> templates;  // family -> templates
  std::size_t filler_count = 0;
  std::string filler_app = "filler";

  void validate() const;
};

CorpusSpec corpus_spec_from_json(const nlohmann::json& j);
CorpusSpec load_corpus_spec(const std::string& path);

std::int64_t eval_dim(const std::string& expr, const std::map<std::string, std::int64_t>& vars);

struct GeneratedCorpus {
  std::vector<CorpusItem> items;
  std::size_t dropped = 0;  // template shapes outside the ranges
};

/// Template shapes for every parameter combination and precision, in
/// declaration order, then seeded log-uniform filler shapes.
GeneratedCorpus generate_corpus(const CorpusSpec& spec);

enum class ConfigName { Sequential, Default, GoKernels, Goldyloc, Oracle, CuPartition, ResourcePartition };

inline constexpr std::array<ConfigName, 7> kAllConfigs{ConfigName::Sequential, ConfigName::Default,
                                                       ConfigName::GoKernels,  ConfigName::Goldyloc,
                                                       ConfigName::Oracle,     ConfigName::CuPartition,
                                                       ConfigName::ResourcePartition};

std::string to_string(ConfigName c);
ConfigName config_from_string(const std::string& s);

struct ExperimentConfig {
  ConfigName name = ConfigName::Default;
  int independent_gemms = 2;
  std::uint64_t seed = 7;

  void validate() const;
};

// n queues, each holding `repeats` back-to-back copies of shape.
Trace homogeneous_trace(const GemmShape& shape, int n, int repeats = 1);

struct RunOptions {
  CpTiming timing;
  Exec exec = Exec::Parallel;
  // Back-to-back copies per queue; the first CP decision is amortized over them.
  int repeats = 8;
  // Keys of the shapes to run; empty runs the whole corpus.
  std::vector<std::string> only_keys;
};

/// One row per unique corpus shape: end-to-end time of an n-copy workload
/// under the configuration, as a speedup over the Sequential timeline.
RunReport run_experiment(const ExperimentConfig& cfg, std::span<const CorpusItem> corpus, const GoLibrary& lib,
                         const CdPredictor* model, const RunOptions& options = {});

// Runs each (config, n) pair and merges rows and summaries into one report.
RunReport run_experiments(std::span<const ConfigName> configs, std::span<const int> ns, std::uint64_t seed,
                          std::span<const CorpusItem> corpus, const GoLibrary& lib, const CdPredictor* model,
                          const RunOptions& options = {});

// One item per (app, entry) of the library, in library order.
std::vector<CorpusItem> library_corpus(const GoLibrary& lib);

// Best label over CDs <= n, by the dataset labelling rule.
int restricted_label(const GoLibraryEntry& entry, int n, const GoLibrary& lib);

}  // namespace cogemm
