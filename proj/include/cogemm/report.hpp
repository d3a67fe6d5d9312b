#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace cogemm {

// Throws ValidationError on an empty set or a non-positive value.
double geomean(std::span<const double> values);

struct ReportRow {
  std::string config;
  int n = 0;
  std::string key;
  std::vector<std::string> apps;
  double speedup = 0.0;  // over Sequential on the same workload
  int chosen_cd = 1;     // CD of the first batch

  bool operator==(const ReportRow&) const = default;
};

struct ConfigSummary {
  std::string config;
  int n = 0;  // 0 pools every n of the config
  double overall = 0.0;
  std::map<std::string, double> per_app;
  std::optional<double> predictor_accuracy;

  bool operator==(const ConfigSummary&) const = default;
};

struct RunReport {
  std::string gpu;
  std::uint64_t seed = 0;
  std::vector<ReportRow> rows;
  std::vector<ConfigSummary> summaries;
  std::string dispatch_log;  // path of the JSON-lines log, empty when none was written

  bool operator==(const RunReport&) const = default;
};

// Rebuilds every summary from the rows. Accuracies already present are kept.
void summarize(RunReport& report);

const ConfigSummary& find_summary(const RunReport& report, const std::string& config, int n = 0);

void to_json(nlohmann::json& j, const RunReport& r);
void from_json(const nlohmann::json& j, RunReport& r);

enum class ReportFormat { Json, Csv, Markdown };
ReportFormat report_format_from_string(const std::string& s);

std::string emit_report(const RunReport& report, ReportFormat format);
RunReport parse_report_json(const std::string& text);

}  // namespace cogemm
