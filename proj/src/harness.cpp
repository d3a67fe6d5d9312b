#include "cogemm/harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <set>

#include "cogemm/error.hpp"
#include "cogemm/io.hpp"
#include "cogemm/parallel.hpp"
#include "cogemm/rng.hpp"

namespace cogemm {

void CorpusRanges::validate() const {
  if (output_min < 1 || output_max < output_min) throw ValidationError("corpus ranges: need 1 <= output_min <= output_max");
  if (k_min < 1 || k_max < k_min) throw ValidationError("corpus ranges: need 1 <= k_min <= k_max");
}

bool CorpusRanges::contains(const GemmShape& s) const {
  const std::int64_t out = s.output_size();
  return out >= output_min && out <= output_max && s.k >= k_min && s.k <= k_max;
}

void CorpusSpec::validate() const {
  ranges.validate();
  if (precisions.empty()) throw ValidationError("corpus spec lists no precisions");
  if (networks.empty() && filler_count == 0) throw ValidationError("corpus spec is empty");
  for (const auto& net : networks) {
    if (!templates.count(net.family)) throw ValidationError("network " + net.app + " uses unknown family " + net.family);
    for (const auto& [name, values] : net.params) {
      if (values.empty()) throw ValidationError("network " + net.app + " parameter " + name + " has no values");
      for (auto v : values) {
        if (v < 1) throw ValidationError("network " + net.app + " parameter " + name + " must be positive");
      }
    }
  }
}

CorpusSpec corpus_spec_from_json(const nlohmann::json& j) {
  CorpusSpec s;
  try {
    s.seed = j.value("seed", s.seed);
    if (j.contains("precisions")) {
      s.precisions.clear();
      for (const auto& p : j.at("precisions")) s.precisions.push_back(precision_from_string(p.get<std::string>()));
    }
    if (j.contains("ranges")) {
      const auto& r = j.at("ranges");
      s.ranges.output_min = r.value("output_min", s.ranges.output_min);
      s.ranges.output_max = r.value("output_max", s.ranges.output_max);
      s.ranges.k_min = r.value("k_min", s.ranges.k_min);
      s.ranges.k_max = r.value("k_max", s.ranges.k_max);
    }
    const nlohmann::json templates = j.value("templates", nlohmann::json::object());
    for (const auto& [family, list] : templates.items()) {
      for (const auto& t : list) {
        ShapeTemplate st;
        st.name = t.value("name", std::string());
        st.m = t.at("m").get<std::string>();
        st.n = t.at("n").get<std::string>();
        st.k = t.at("k").get<std::string>();
        st.trans_a = t.value("trans_a", false);
        st.trans_b = t.value("trans_b", false);
        s.templates[family].push_back(st);
      }
    }
    const nlohmann::json networks = j.value("networks", nlohmann::json::array());
    for (const auto& n : networks) {
      NetworkSpec net;
      net.app = n.at("app").get<std::string>();
      net.family = n.at("family").get<std::string>();
      net.params = n.at("params").get<std::map<std::string, std::vector<std::int64_t>>>();
      s.networks.push_back(std::move(net));
    }
    if (j.contains("filler")) {
      s.filler_count = j.at("filler").value("count", std::size_t{0});
      s.filler_app = j.at("filler").value("app", s.filler_app);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("corpus spec: ") + e.what());
  }
  s.validate();
  return s;
}

CorpusSpec load_corpus_spec(const std::string& path) { return corpus_spec_from_json(read_json_file(path)); }

std::int64_t eval_dim(const std::string& expr, const std::map<std::string, std::int64_t>& vars) {
  std::int64_t value = 1;
  std::size_t pos = 0;
  bool any = false;
  while (pos <= expr.size()) {
    std::size_t end = expr.find('*', pos);
    if (end == std::string::npos) end = expr.size();
    std::string term = expr.substr(pos, end - pos);
    term.erase(std::remove_if(term.begin(), term.end(), [](unsigned char c) { return std::isspace(c); }), term.end());
    if (term.empty()) throw ValidationError("bad dimension expression '" + expr + "'");
    std::int64_t v = 0;
    if (std::all_of(term.begin(), term.end(), [](unsigned char c) { return std::isdigit(c); })) {
      v = std::stoll(term);
    } else {
      auto it = vars.find(term);
      if (it == vars.end()) throw ValidationError("unknown parameter '" + term + "' in '" + expr + "'");
      v = it->second;
    }
    value *= v;
    any = true;
    pos = end + 1;
  }
  if (!any || value < 1) throw ValidationError("dimension '" + expr + "' is not positive");
  return value;
}

namespace {

// Every assignment of the parameters, last name varying fastest.
std::vector<std::map<std::string, std::int64_t>> combinations(const std::map<std::string, std::vector<std::int64_t>>& params) {
  std::vector<std::map<std::string, std::int64_t>> out{{}};
  for (const auto& [name, values] : params) {
    std::vector<std::map<std::string, std::int64_t>> next;
    for (const auto& partial : out) {
      for (auto v : values) {
        auto m = partial;
        m[name] = v;
        next.push_back(std::move(m));
      }
    }
    out = std::move(next);
  }
  return out;
}

std::int64_t log_uniform(Rng& rng, double lo, double hi) {
  return static_cast<std::int64_t>(std::llround(std::exp(rng.uniform(std::log(lo), std::log(hi)))));
}

}  // namespace

GeneratedCorpus generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  GeneratedCorpus out;
  std::set<std::pair<std::string, GemmShape>> seen;
  auto add = [&](const std::string& app, const GemmShape& s) {
    if (seen.insert({app, s}).second) out.items.push_back({app, s});
  };
  for (const auto& net : spec.networks) {
    for (const auto& vars : combinations(net.params)) {
      for (const auto& t : spec.templates.at(net.family)) {
        for (Precision p : spec.precisions) {
          GemmShape s{eval_dim(t.m, vars), eval_dim(t.n, vars), eval_dim(t.k, vars), t.trans_a, t.trans_b, p};
          if (!spec.ranges.contains(s)) {
            ++out.dropped;
            continue;
          }
          add(net.app, s);
        }
      }
    }
  }
  Rng rng(spec.seed);
  const double out_lo = static_cast<double>(spec.ranges.output_min), out_hi = static_cast<double>(spec.ranges.output_max);
  std::size_t made = 0;
  while (made < spec.filler_count) {
    const double out_size = std::exp(rng.uniform(std::log(out_lo), std::log(out_hi)));
    const double frac = rng.uniform(0.2, 0.8);
    GemmShape s;
    s.m = std::max<std::int64_t>(1, std::llround(std::pow(out_size, frac)));
    s.n = std::max<std::int64_t>(1, std::llround(out_size / static_cast<double>(s.m)));
    s.k = log_uniform(rng, static_cast<double>(spec.ranges.k_min), static_cast<double>(spec.ranges.k_max));
    s.trans_a = rng.uniform() < 0.25;
    s.trans_b = rng.uniform() < 0.25;
    s.precision = spec.precisions[rng.index(spec.precisions.size())];
    if (!spec.ranges.contains(s)) continue;
    const std::size_t before = out.items.size();
    add(spec.filler_app, s);
    if (out.items.size() > before) ++made;
  }
  return out;
}

std::string to_string(ConfigName c) {
  switch (c) {
    case ConfigName::Sequential: return "sequential";
    case ConfigName::Default: return "default";
    case ConfigName::GoKernels: return "go_kernels";
    case ConfigName::Goldyloc: return "goldyloc";
    case ConfigName::Oracle: return "oracle";
    case ConfigName::CuPartition: return "cu_partition";
    case ConfigName::ResourcePartition: return "resource_partition";
  }
  return "?";
}

ConfigName config_from_string(const std::string& s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  std::replace(lower.begin(), lower.end(), '-', '_');
  for (ConfigName c : kAllConfigs) {
    if (to_string(c) == lower) return c;
  }
  throw ValidationError("unknown configuration '" + s + "'");
}

void ExperimentConfig::validate() const {
  if (std::find(kConcurrentCds.begin(), kConcurrentCds.end(), independent_gemms) == kConcurrentCds.end()) {
    throw ValidationError("independent GEMM count must be one of 2, 4, 8, 16");
  }
}

Trace homogeneous_trace(const GemmShape& shape, int n, int repeats) {
  if (n < 1 || static_cast<std::size_t>(n) > kMaxQueues) throw ValidationError("workload size must be in [1, 32]");
  if (repeats < 1) throw ValidationError("repeats must be >= 1");
  Trace t;
  for (int r = 0; r < repeats; ++r) {
    for (int q = 0; q < n; ++q) t.push_back(TraceEntry{static_cast<std::size_t>(q), GemmWork{shape}});
  }
  return t;
}

std::vector<CorpusItem> library_corpus(const GoLibrary& lib) {
  std::vector<CorpusItem> out;
  for (const auto& e : lib.entries()) {
    if (e.apps.empty()) out.push_back({"", e.shape});
    for (const auto& app : e.apps) out.push_back({app, e.shape});
  }
  return out;
}

int restricted_label(const GoLibraryEntry& entry, int n, const GoLibrary& lib) {
  std::map<int, double> speedup;
  for (int cd : kConcurrentCds) {
    if (cd <= n) speedup[cd] = concurrent_speedup(entry, cd, lib);
  }
  return label_from_speedups(speedup);
}

namespace {

Policy policy_of(ConfigName c) {
  switch (c) {
    case ConfigName::Sequential: return Policy::Sequential;
    case ConfigName::Default: return Policy::Default;
    case ConfigName::GoKernels: return Policy::GoKernels;
    case ConfigName::Goldyloc:
    case ConfigName::Oracle: return Policy::Dynamic;
    case ConfigName::CuPartition: return Policy::CuPartition;
    case ConfigName::ResourcePartition: return Policy::ResourcePartition;
  }
  return Policy::Default;
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg, std::span<const CorpusItem> corpus, const GoLibrary& lib,
                         const CdPredictor* model, const RunOptions& options) {
  cfg.validate();
  if (cfg.name == ConfigName::Goldyloc && !model) throw ConfigurationError("goldyloc needs a trained model");

  auto shapes = unique_shapes(corpus);
  if (!options.only_keys.empty()) {
    const std::set<std::string> keep(options.only_keys.begin(), options.only_keys.end());
    std::erase_if(shapes, [&](const auto& s) { return !keep.count(s.first.key()); });
  }
  if (shapes.empty()) throw ValidationError("no shapes to run");

  std::unique_ptr<CdChooser> chooser;
  if (cfg.name == ConfigName::Goldyloc) chooser = std::make_unique<ModelChooser>(*model);
  const TimelineOptions seq{Policy::Sequential, nullptr, options.timing};
  const TimelineOptions run{policy_of(cfg.name), chooser.get(), options.timing};

  std::vector<ReportRow> rows(shapes.size());
  std::vector<int> agree(shapes.size(), 0);
  for_each_index(shapes.size(), options.exec, [&](std::size_t i) {
    const auto& [shape, apps] = shapes[i];
    const Trace trace = homogeneous_trace(shape, cfg.independent_gemms, options.repeats);
    const TimelineResult base = timeline(trace, lib, seq);
    TimelineResult res;
    if (cfg.name == ConfigName::Sequential) {
      res = base;
    } else if (cfg.name == ConfigName::Oracle) {
      res = oracle_timeline(trace, lib, options.timing).timeline;
    } else {
      res = timeline(trace, lib, run);
    }
    ReportRow& r = rows[i];
    r.config = to_string(cfg.name);
    r.n = cfg.independent_gemms;
    r.key = shape.key();
    r.apps = apps;
    r.speedup = static_cast<double>(base.end_to_end_ps) / static_cast<double>(res.end_to_end_ps);
    r.chosen_cd = res.batches.empty() ? 1 : static_cast<int>(res.batches.front().events.size());
    if (cfg.name == ConfigName::Goldyloc) {
      if (const GoLibraryEntry* e = lib.find(shape)) {
        agree[i] = r.chosen_cd == restricted_label(*e, cfg.independent_gemms, lib) ? 1 : 0;
      }
    }
  });
  std::sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) { return a.key < b.key; });

  RunReport report;
  report.gpu = lib.gpu().name;
  report.seed = cfg.seed;
  report.rows = std::move(rows);
  summarize(report);
  if (cfg.name == ConfigName::Goldyloc) {
    double hits = 0;
    for (int a : agree) hits += a;
    report.summaries.front().predictor_accuracy = hits / static_cast<double>(agree.size());
  }
  return report;
}

RunReport run_experiments(std::span<const ConfigName> configs, std::span<const int> ns, std::uint64_t seed,
                          std::span<const CorpusItem> corpus, const GoLibrary& lib, const CdPredictor* model,
                          const RunOptions& options) {
  if (configs.empty() || ns.empty()) throw ValidationError("nothing to run");
  RunReport merged;
  merged.gpu = lib.gpu().name;
  merged.seed = seed;
  std::map<std::pair<std::string, int>, double> accuracy;
  for (ConfigName c : configs) {
    for (int n : ns) {
      RunReport one = run_experiment(ExperimentConfig{c, n, seed}, corpus, lib, model, options);
      for (const auto& s : one.summaries) {
        if (s.predictor_accuracy) accuracy[{s.config, s.n}] = *s.predictor_accuracy;
      }
      merged.rows.insert(merged.rows.end(), one.rows.begin(), one.rows.end());
    }
  }
  summarize(merged);
  for (auto& s : merged.summaries) {
    auto it = accuracy.find({s.config, s.n});
    if (it != accuracy.end()) s.predictor_accuracy = it->second;
  }
  return merged;
}

}  // namespace cogemm
