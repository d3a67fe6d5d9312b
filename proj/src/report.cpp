#include "cogemm/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "cogemm/error.hpp"

namespace cogemm {

double geomean(std::span<const double> values) {
  if (values.empty()) throw ValidationError("geomean of an empty set");
  double log_sum = 0.0;
  for (double v : values) {
    if (!(v > 0) || !std::isfinite(v)) throw ValidationError("geomean needs strictly positive finite values");
    log_sum += std::log(v);
  }
  return std::exp(log_sum / static_cast<double>(values.size()));
}

namespace {

ConfigSummary summarize_rows(const std::string& config, int n, const std::vector<const ReportRow*>& rows) {
  ConfigSummary s;
  s.config = config;
  s.n = n;
  std::vector<double> all;
  std::map<std::string, std::vector<double>> by_app;
  for (const ReportRow* r : rows) {
    all.push_back(r->speedup);
    for (const auto& app : r->apps) by_app[app].push_back(r->speedup);
  }
  s.overall = geomean(all);
  for (const auto& [app, v] : by_app) s.per_app[app] = geomean(v);
  return s;
}

std::string fmt(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

void summarize(RunReport& report) {
  std::map<std::pair<std::string, int>, std::optional<double>> kept;
  for (const auto& s : report.summaries) kept[{s.config, s.n}] = s.predictor_accuracy;

  std::vector<std::string> configs;
  std::map<std::string, std::map<int, std::vector<const ReportRow*>>> grouped;
  for (const auto& r : report.rows) {
    if (!grouped.count(r.config)) configs.push_back(r.config);
    grouped[r.config][r.n].push_back(&r);
  }
  report.summaries.clear();
  for (const auto& c : configs) {
    std::vector<const ReportRow*> pooled;
    for (const auto& [n, rows] : grouped[c]) {
      report.summaries.push_back(summarize_rows(c, n, rows));
      pooled.insert(pooled.end(), rows.begin(), rows.end());
    }
    if (grouped[c].size() > 1) report.summaries.push_back(summarize_rows(c, 0, pooled));
  }
  for (auto& s : report.summaries) {
    auto it = kept.find({s.config, s.n});
    if (it != kept.end()) s.predictor_accuracy = it->second;
  }
}

const ConfigSummary& find_summary(const RunReport& report, const std::string& config, int n) {
  for (const auto& s : report.summaries) {
    if (s.config == config && s.n == n) return s;
  }
  // A config run at a single n has no pooled entry; its only summary stands in.
  if (n == 0) {
    const ConfigSummary* only = nullptr;
    std::size_t count = 0;
    for (const auto& s : report.summaries) {
      if (s.config == config) {
        only = &s;
        ++count;
      }
    }
    if (count == 1) return *only;
  }
  throw NotFoundError("report has no summary for " + config + " n=" + std::to_string(n));
}

void to_json(nlohmann::json& j, const RunReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"config", row.config},
                    {"n", row.n},
                    {"key", row.key},
                    {"apps", row.apps},
                    {"speedup", row.speedup},
                    {"chosen_cd", row.chosen_cd}});
  }
  nlohmann::json sums = nlohmann::json::array();
  for (const auto& s : r.summaries) {
    nlohmann::json js{{"config", s.config}, {"n", s.n}, {"overall", s.overall}, {"per_app", s.per_app}};
    if (s.predictor_accuracy) js["predictor_accuracy"] = *s.predictor_accuracy;
    sums.push_back(std::move(js));
  }
  j = nlohmann::json{{"gpu", r.gpu}, {"seed", r.seed}, {"dispatch_log", r.dispatch_log}, {"summaries", sums}, {"rows", rows}};
}

void from_json(const nlohmann::json& j, RunReport& r) {
  try {
    r.gpu = j.at("gpu").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.dispatch_log = j.value("dispatch_log", std::string());
    r.rows.clear();
    for (const auto& row : j.at("rows")) {
      ReportRow x;
      x.config = row.at("config").get<std::string>();
      x.n = row.at("n").get<int>();
      x.key = row.at("key").get<std::string>();
      x.apps = row.at("apps").get<std::vector<std::string>>();
      x.speedup = row.at("speedup").get<double>();
      x.chosen_cd = row.at("chosen_cd").get<int>();
      if (!(x.speedup > 0)) throw ValidationError("report row " + x.key + " has a non-positive speedup");
      r.rows.push_back(std::move(x));
    }
    r.summaries.clear();
    for (const auto& s : j.at("summaries")) {
      ConfigSummary x;
      x.config = s.at("config").get<std::string>();
      x.n = s.at("n").get<int>();
      x.overall = s.at("overall").get<double>();
      x.per_app = s.at("per_app").get<std::map<std::string, double>>();
      if (s.contains("predictor_accuracy")) x.predictor_accuracy = s.at("predictor_accuracy").get<double>();
      r.summaries.push_back(std::move(x));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("report: ") + e.what());
  }
}

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "md" || s == "markdown") return ReportFormat::Markdown;
  throw ValidationError("unsupported report format '" + s + "'");
}

std::string emit_report(const RunReport& report, ReportFormat format) {
  if (format == ReportFormat::Json) return nlohmann::json(report).dump(2) + "\n";

  std::ostringstream ss;
  if (format == ReportFormat::Csv) {
    ss << "app,key,config,n,speedup,chosen_cd\n";
    for (const auto& r : report.rows) {
      for (const auto& app : r.apps) {
        ss << app << ',' << r.key << ',' << r.config << ',' << r.n << ',' << fmt(r.speedup, "%.17g") << ','
           << r.chosen_cd << '\n';
      }
    }
    return ss.str();
  }

  // Markdown: one table per n, apps as rows and configs as columns.
  std::vector<std::string> configs;
  std::set<int> ns;
  std::set<std::string> apps;
  for (const auto& s : report.summaries) {
    if (std::find(configs.begin(), configs.end(), s.config) == configs.end()) configs.push_back(s.config);
    ns.insert(s.n);
    for (const auto& [app, v] : s.per_app) apps.insert(app);
  }
  ss << "# Speedup over sequential (geomean), " << report.gpu << "\n";
  for (int n : ns) {
    ss << "\n## " << (n == 0 ? std::string("All instance counts") : std::to_string(n) + " independent GEMMs") << "\n\n";
    ss << "| app |";
    for (const auto& c : configs) ss << ' ' << c << " |";
    ss << "\n|---|";
    for (std::size_t i = 0; i < configs.size(); ++i) ss << "---:|";
    ss << '\n';
    auto cell = [&](const std::string& config, const std::string* app) -> std::string {
      for (const auto& s : report.summaries) {
        if (s.config != config || s.n != n) continue;
        if (!app) return fmt(s.overall);
        auto it = s.per_app.find(*app);
        return it == s.per_app.end() ? "-" : fmt(it->second);
      }
      return "-";
    };
    for (const auto& app : apps) {
      ss << "| " << app << " |";
      for (const auto& c : configs) ss << ' ' << cell(c, &app) << " |";
      ss << '\n';
    }
    ss << "| **geomean** |";
    for (const auto& c : configs) ss << " **" << cell(c, nullptr) << "** |";
    ss << '\n';
  }
  bool any_accuracy = false;
  for (const auto& s : report.summaries) any_accuracy |= s.predictor_accuracy.has_value();
  if (any_accuracy) {
    ss << "\n## Predictor agreement with the best CD\n\n| config | n | accuracy |\n|---|---:|---:|\n";
    for (const auto& s : report.summaries) {
      if (s.predictor_accuracy) ss << "| " << s.config << " | " << s.n << " | " << fmt(*s.predictor_accuracy) << " |\n";
    }
  }
  return ss.str();
}

RunReport parse_report_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("report: ") + e.what());
  }
  return j.get<RunReport>();
}

}  // namespace cogemm
