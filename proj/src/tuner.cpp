#include "cogemm/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "cogemm/error.hpp"
#include "cogemm/io.hpp"
#include "cogemm/parallel.hpp"
#include "cogemm/rng.hpp"

namespace cogemm {

namespace {

constexpr std::array<RcLabel, 3> kRcOrder{RcLabel::Full, RcLabel::Half, RcLabel::Quarter};

std::vector<SimJob> copies(const GemmShape& shape, const KernelConfig& kernel, int n) {
  return std::vector<SimJob>(static_cast<std::size_t>(n), SimJob{shape, kernel});
}

double homogeneous_makespan(const GemmShape& shape, const KernelConfig& kernel, int cd, const GpuResources& gpu,
                            const ModelCard& card) {
  const auto jobs = copies(shape, kernel, cd);
  return simulate_concurrent(jobs, gpu, card).makespan_s;
}

KernelChoice make_choice(const GemmShape& shape, const KernelConfig& kernel, int cd, RcLabel rc,
                         const GpuResources& gpu, const ModelCard& card) {
  KernelChoice c;
  c.kernel = kernel.id;
  const SimResult iso = simulate_isolated(shape, kernel, gpu, card);
  c.features = iso.features;
  c.runtime_s = iso.runtime_s;
  c.makespan_s = cd == 1 ? iso.runtime_s : homogeneous_makespan(shape, kernel, cd, gpu, card);
  c.source_rc = rc;
  return c;
}

const KernelConfig& isolated_candidate(const std::map<RcLabel, KernelConfig>& candidates) {
  if (candidates.empty()) throw ValidationError("step 2 needs at least one candidate kernel");
  // Full when present, otherwise the least constrained one that survived.
  return candidates.begin()->second;
}

void sort_entries(std::vector<GoLibraryEntry>& entries) {
  std::sort(entries.begin(), entries.end(),
            [](const GoLibraryEntry& a, const GoLibraryEntry& b) { return a.shape < b.shape; });
}

}  // namespace

bool is_supported_cd(int cd) { return std::find(kAllCds.begin(), kAllCds.end(), cd) != kAllCds.end(); }

const KernelChoice& GoLibraryEntry::isolated() const {
  auto it = per_cd.find(1);
  if (it == per_cd.end()) throw NotFoundError("library entry " + shape.key() + " has no isolated kernel");
  return it->second;
}

const KernelChoice& GoLibraryEntry::for_cd(int cd) const {
  auto it = per_cd.find(cd);
  return it == per_cd.end() ? isolated() : it->second;
}

std::vector<ResourceConstraint> default_constraints() {
  return {ResourceConstraint::full(), ResourceConstraint::half(), ResourceConstraint::quarter()};
}

Step1Result tune_step1(const GemmShape& shape, std::span<const KernelConfig> kernels, const GpuResources& gpu,
                       std::span<const ResourceConstraint> rcs, const ModelCard& card, Exec exec) {
  if (kernels.empty()) throw ValidationError("step 1 needs a non-empty kernel list");
  Step1Result out;
  std::vector<double> runtime(kernels.size());
  for (const ResourceConstraint& rc : rcs) {
    GpuResources constrained;
    try {
      constrained = apply_constraint(gpu, rc);
    } catch (const InvalidConstraintError& e) {
      out.warnings.push_back(shape.key() + ": " + e.what());
      continue;
    }
    const SimResources res = SimResources::of(constrained, shape.precision);
    for_each_index(kernels.size(), exec, [&](std::size_t i) {
      runtime[i] = is_valid(kernels[i], shape.elem_bytes(), res.limits)
                       ? simulate_isolated(shape, kernels[i], res, card).runtime_s
                       : std::numeric_limits<double>::infinity();
    });
    std::size_t best = kernels.size();
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      if (!std::isfinite(runtime[i])) continue;
      if (best == kernels.size() || runtime[i] < runtime[best] ||
          (runtime[i] == runtime[best] && kernels[i].id < kernels[best].id)) {
        best = i;
      }
    }
    if (best == kernels.size()) {
      out.warnings.push_back(shape.key() + ": no kernel valid under " + std::string(to_string(rc.label)));
      continue;
    }
    out.winners[rc.label] = kernels[best];
  }
  return out;
}

GoLibraryEntry tune_step2(const GemmShape& shape, const std::map<RcLabel, KernelConfig>& candidates,
                          const GpuResources& gpu, std::span<const int> cds, const ModelCard& card) {
  const KernelConfig& iso = isolated_candidate(candidates);
  GoLibraryEntry entry;
  entry.shape = shape;
  entry.per_cd[1] = make_choice(shape, iso, 1, candidates.begin()->first, gpu, card);
  for (int cd : cds) {
    if (cd < 2 || !is_supported_cd(cd)) throw ValidationError("step 2 CDs must be drawn from {2,4,8,16}");
    bool have = false;
    KernelChoice best;
    for (RcLabel rc : kRcOrder) {
      auto it = candidates.find(rc);
      if (it == candidates.end()) continue;
      if (have && it->second.id == best.kernel) continue;
      const double makespan = homogeneous_makespan(shape, it->second, cd, gpu, card);
      if (!have || makespan < best.makespan_s) {
        best = make_choice(shape, it->second, 1, rc, gpu, card);
        best.makespan_s = makespan;
        have = true;
      }
    }
    entry.per_cd[cd] = best;
  }
  return entry;
}

GoLibrary::GoLibrary(GpuResources gpu, ModelCard card, std::vector<KernelConfig> kernels,
                     std::vector<GoLibraryEntry> entries)
    : gpu_(std::move(gpu)), card_(card), kernels_(std::move(kernels)), entries_(std::move(entries)) {
  std::sort(kernels_.begin(), kernels_.end(), [](const KernelConfig& a, const KernelConfig& b) { return a.id < b.id; });
  sort_entries(entries_);
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i].shape == entries_[i - 1].shape) {
      throw ValidationError("duplicate library entry " + entries_[i].shape.key());
    }
  }
  for (const auto& e : entries_) {
    if (!e.per_cd.contains(1)) throw ValidationError("library entry " + e.shape.key() + " lacks per_cd[1]");
    for (const auto& [cd, choice] : e.per_cd) {
      if (!is_supported_cd(cd)) throw ValidationError("library entry " + e.shape.key() + " has unsupported CD");
      kernel(choice.kernel);
    }
  }
}

const GoLibraryEntry* GoLibrary::find(const GemmShape& shape) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), shape,
                             [](const GoLibraryEntry& e, const GemmShape& s) { return e.shape < s; });
  if (it == entries_.end() || it->shape != shape) return nullptr;
  return &*it;
}

const GoLibraryEntry& GoLibrary::at(const GemmShape& shape) const {
  const GoLibraryEntry* e = find(shape);
  if (!e) throw NotFoundError("shape " + shape.key() + " is not in the library");
  return *e;
}

GoLibraryEntry& GoLibrary::mutable_entry(const GemmShape& shape) { return const_cast<GoLibraryEntry&>(at(shape)); }

const KernelConfig& GoLibrary::kernel(KernelId id) const {
  auto it = std::lower_bound(kernels_.begin(), kernels_.end(), id,
                             [](const KernelConfig& k, KernelId v) { return k.id < v; });
  if (it == kernels_.end() || it->id != id) throw NotFoundError("kernel id " + std::to_string(id) + " is unknown");
  return *it;
}

namespace {

void to_json(nlohmann::json& j, const KernelChoice& c) {
  j = nlohmann::json{{"kernel", c.kernel},
                     {"features", c.features},
                     {"runtime_s", c.runtime_s},
                     {"makespan_s", c.makespan_s},
                     {"source_rc", std::string(to_string(c.source_rc))}};
}

void from_json(const nlohmann::json& j, KernelChoice& c) {
  c.kernel = j.at("kernel").get<KernelId>();
  c.features = j.at("features").get<KernelFeatures>();
  c.runtime_s = j.at("runtime_s").get<double>();
  c.makespan_s = j.at("makespan_s").get<double>();
  c.source_rc = rc_from_string(j.at("source_rc").get<std::string>());
}

}  // namespace

void to_json(nlohmann::json& j, const GoLibrary& lib) {
  nlohmann::json entries = nlohmann::json::object();
  for (const auto& e : lib.entries()) {
    nlohmann::json per_cd = nlohmann::json::object();
    for (const auto& [cd, choice] : e.per_cd) {
      nlohmann::json cj;
      to_json(cj, choice);
      cj["kernel_name"] = lib.kernel(choice.kernel).name();
      per_cd[std::to_string(cd)] = cj;
    }
    entries[e.shape.key()] = {{"shape", e.shape}, {"apps", e.apps}, {"knn_predicted", e.knn_predicted},
                              {"per_cd", per_cd}};
  }
  j = nlohmann::json{{"gpu", lib.gpu()}, {"model_card", lib.card()}, {"kernels", lib.kernels()}, {"entries", entries}};
}

void from_json(const nlohmann::json& j, GoLibrary& lib) {
  try {
    auto gpu = j.at("gpu").get<GpuResources>();
    auto card = j.at("model_card").get<ModelCard>();
    auto kernels = j.at("kernels").get<std::vector<KernelConfig>>();
    std::vector<GoLibraryEntry> entries;
    for (const auto& [key, ej] : j.at("entries").items()) {
      GoLibraryEntry e;
      e.shape = ej.at("shape").get<GemmShape>();
      if (e.shape.key() != key) throw ValidationError("library key '" + key + "' does not match its shape");
      e.apps = ej.value("apps", std::vector<std::string>{});
      e.knn_predicted = ej.value("knn_predicted", false);
      for (const auto& [cd, cj] : ej.at("per_cd").items()) {
        KernelChoice c;
        from_json(cj, c);
        e.per_cd[std::stoi(cd)] = c;
      }
      entries.push_back(std::move(e));
    }
    lib = GoLibrary(std::move(gpu), card, std::move(kernels), std::move(entries));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("library: ") + e.what());
  }
}

GoLibrary load_library(const std::string& path) { return read_json_file(path).get<GoLibrary>(); }

std::vector<CorpusItem> load_corpus(const std::string& path) {
  const nlohmann::json j = read_json_file(path);
  const nlohmann::json& items = j.is_array() ? j : j.at("items");
  std::vector<CorpusItem> out;
  try {
    for (const auto& it : items) out.push_back({it.value("app", std::string("custom")), it.at("shape").get<GemmShape>()});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("corpus '" + path + "': " + e.what());
  }
  if (out.empty()) throw ValidationError("corpus '" + path + "' is empty");
  return out;
}

nlohmann::json corpus_to_json(std::span<const CorpusItem> corpus) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& c : corpus) items.push_back({{"app", c.app}, {"key", c.shape.key()}, {"shape", c.shape}});
  return nlohmann::json{{"items", items}};
}

std::vector<std::pair<GemmShape, std::vector<std::string>>> unique_shapes(std::span<const CorpusItem> corpus) {
  std::vector<std::pair<GemmShape, std::vector<std::string>>> out;
  std::map<GemmShape, std::size_t> index;
  for (const auto& item : corpus) {
    auto [it, inserted] = index.try_emplace(item.shape, out.size());
    if (inserted) out.push_back({item.shape, {}});
    auto& apps = out[it->second].second;
    if (std::find(apps.begin(), apps.end(), item.app) == apps.end()) apps.push_back(item.app);
  }
  for (auto& [shape, apps] : out) std::sort(apps.begin(), apps.end());
  return out;
}

GoLibraryEntry tune_shape(const GemmShape& shape, std::span<const KernelConfig> kernels, const GpuResources& gpu,
                          const ModelCard& card) {
  const auto rcs = default_constraints();
  const Step1Result s1 = tune_step1(shape, kernels, gpu, rcs, card, Exec::Serial);
  if (s1.winners.empty()) throw EmptySpaceError("no kernel is valid for " + shape.key());
  return tune_step2(shape, s1.winners, gpu, kConcurrentCds, card);
}

GoLibrary build_go_library(std::span<const CorpusItem> corpus, const GpuResources& gpu,
                           std::span<const KernelConfig> kernels, const ModelCard& card, Exec exec) {
  if (corpus.empty()) throw ValidationError("cannot build a library from an empty corpus");
  const auto shapes = unique_shapes(corpus);
  std::vector<GoLibraryEntry> entries(shapes.size());
  for_each_index(shapes.size(), exec, [&](std::size_t i) {
    entries[i] = tune_shape(shapes[i].first, kernels, gpu, card);
    entries[i].apps = shapes[i].second;
  });
  return GoLibrary(gpu, card, std::vector<KernelConfig>(kernels.begin(), kernels.end()), std::move(entries));
}

PrcSample prc_sample(const GoLibraryEntry& entry, const GoLibrary& lib) {
  PrcSample s;
  s.shape = entry.shape;
  const KernelConfig& iso = lib.kernel(entry.isolated().kernel);
  s.default_tile = static_cast<std::int64_t>(iso.tile_m) * iso.tile_n;
  s.output_size = entry.shape.output_size();
  for (const auto& [cd, choice] : entry.per_cd) {
    if (cd > 1) s.preferred_rc[cd] = choice.source_rc;
  }
  return s;
}

std::map<int, RcLabel> knn_predict_prc(const PrcQuery& query, std::span<const PrcSample> training, int k) {
  if (training.empty()) throw ValidationError("KNN needs a non-empty training set");
  if (k < 1 || static_cast<std::size_t>(k) > training.size()) {
    throw ValidationError("KNN k must be in [1, |training|]");
  }
  double lo[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  double hi[2] = {-lo[0], -lo[1]};
  auto coords = [](std::int64_t out, std::int64_t tile) {
    return std::array<double, 2>{static_cast<double>(out), static_cast<double>(tile)};
  };
  for (const auto& s : training) {
    const auto c = coords(s.output_size, s.default_tile);
    for (int d = 0; d < 2; ++d) {
      lo[d] = std::min(lo[d], c[d]);
      hi[d] = std::max(hi[d], c[d]);
    }
  }
  auto norm = [&](const std::array<double, 2>& c) {
    std::array<double, 2> r{};
    for (int d = 0; d < 2; ++d) r[d] = hi[d] > lo[d] ? (c[d] - lo[d]) / (hi[d] - lo[d]) : 0.0;
    return r;
  };
  const auto q = norm(coords(query.output_size, query.default_tile));
  std::vector<std::pair<double, std::size_t>> dist(training.size());
  for (std::size_t i = 0; i < training.size(); ++i) {
    const auto p = norm(coords(training[i].output_size, training[i].default_tile));
    dist[i] = {std::hypot(p[0] - q[0], p[1] - q[1]), i};
  }
  std::sort(dist.begin(), dist.end());

  std::set<int> cds;
  for (const auto& s : training)
    for (const auto& [cd, rc] : s.preferred_rc) cds.insert(cd);

  std::map<int, RcLabel> out;
  for (int cd : cds) {
    std::map<RcLabel, int> votes;
    std::vector<RcLabel> by_distance;
    for (int i = 0; i < k; ++i) {
      const auto& prc = training[dist[static_cast<std::size_t>(i)].second].preferred_rc;
      auto it = prc.find(cd);
      if (it == prc.end()) continue;
      ++votes[it->second];
      by_distance.push_back(it->second);
    }
    if (by_distance.empty()) continue;
    int top = 0;
    for (const auto& [rc, n] : votes) top = std::max(top, n);
    // Among the labels tied for the most votes, take the closest one.
    for (RcLabel rc : by_distance) {
      if (votes[rc] == top) {
        out[cd] = rc;
        break;
      }
    }
  }
  return out;
}

GoLibrary build_knn_library(std::span<const CorpusItem> corpus, const GpuResources& gpu,
                            std::span<const KernelConfig> kernels, const ModelCard& card, const KnnOptions& options,
                            Exec exec) {
  if (corpus.empty()) throw ValidationError("cannot build a library from an empty corpus");
  if (!(options.tuned_fraction > 0.0 && options.tuned_fraction <= 1.0)) {
    throw ValidationError("KNN tuned fraction must be in (0, 1]");
  }
  const auto shapes = unique_shapes(corpus);
  std::vector<std::size_t> order(shapes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(options.seed);
  rng.shuffle(order);
  const auto n_tuned = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(options.tuned_fraction * static_cast<double>(shapes.size()))), 1,
      shapes.size());

  std::vector<GoLibraryEntry> entries(shapes.size());
  for_each_index(n_tuned, exec, [&](std::size_t i) {
    const auto& [shape, apps] = shapes[order[i]];
    entries[i] = tune_shape(shape, kernels, gpu, card);
    entries[i].apps = apps;
  });

  const GoLibrary tuned(gpu, card, std::vector<KernelConfig>(kernels.begin(), kernels.end()),
                        std::vector<GoLibraryEntry>(entries.begin(), entries.begin() + static_cast<long>(n_tuned)));
  std::vector<PrcSample> training;
  for (const auto& e : tuned.entries()) training.push_back(prc_sample(e, tuned));
  const int k = std::min<int>(options.k, static_cast<int>(training.size()));

  const auto rcs = default_constraints();
  for_each_index(shapes.size() - n_tuned, exec, [&](std::size_t j) {
    const std::size_t i = n_tuned + j;
    const auto& [shape, apps] = shapes[order[i]];
    const Step1Result s1 = tune_step1(shape, kernels, gpu, rcs, card, Exec::Serial);
    if (s1.winners.empty()) throw EmptySpaceError("no kernel is valid for " + shape.key());
    const KernelConfig& iso = isolated_candidate(s1.winners);
    const PrcQuery query{static_cast<std::int64_t>(iso.tile_m) * iso.tile_n, shape.output_size()};
    const auto prc = knn_predict_prc(query, training, k);

    GoLibraryEntry e;
    e.shape = shape;
    e.apps = apps;
    e.knn_predicted = true;
    e.per_cd[1] = make_choice(shape, iso, 1, s1.winners.begin()->first, gpu, card);
    for (int cd : kConcurrentCds) {
      auto rc_it = prc.find(cd);
      auto cand = rc_it == prc.end() ? s1.winners.end() : s1.winners.find(rc_it->second);
      if (cand == s1.winners.end()) cand = s1.winners.begin();
      e.per_cd[cd] = make_choice(shape, cand->second, cd, cand->first, gpu, card);
    }
    entries[i] = std::move(e);
  });
  return GoLibrary(gpu, card, std::vector<KernelConfig>(kernels.begin(), kernels.end()), std::move(entries));
}

}  // namespace cogemm
