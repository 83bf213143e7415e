#pragma once

// JSON forms of configs, metrics, weights and STAPLE performance.
//
// Config readers accept partial objects (missing keys keep their defaults)
// and reject unknown keys, so typos in a config file fail loudly.

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>

#include "gliofuse/lesion_metrics.hpp"
#include "gliofuse/report.hpp"
#include "gliofuse/staple.hpp"
#include "gliofuse/weighted_fusion.hpp"

namespace gliofuse {

using json = nlohmann::json;

void to_json(json& j, const MetricConfig& c);
void from_json(const json& j, MetricConfig& c);

void to_json(json& j, const StapleConfig& c);
void from_json(const json& j, StapleConfig& c);

void to_json(json& j, const FitConfig& c);
void from_json(const json& j, FitConfig& c);

void to_json(json& j, const LabelEncoding& e);
void from_json(const json& j, LabelEncoding& e);

void to_json(json& j, const RegionDefinitions& d);
void from_json(const json& j, RegionDefinitions& d);

void to_json(json& j, const LesionScores& s);
void from_json(const json& j, LesionScores& s);

void to_json(json& j, const RaterPerformance& p);

/// {class name -> [weights]}, plus an optional "models" list of names.
void to_json(json& j, const WeightMatrix& w);
/// Rows are ordered by the encoding's classes; every class must be present.
WeightMatrix weight_matrix_from_json(const json& j, const LabelEncoding& encoding);
/// Same, for the standard encoding.
void from_json(const json& j, WeightMatrix& w);

void to_json(json& j, const AggregateReport& r);
void from_json(const json& j, AggregateReport& r);

/// Case document: {"case_id", "method", "metric_config", "regions": {...}}.
json case_metrics_to_json(const CaseMetrics& m, const MetricConfig& cfg,
                          const std::string& method);

struct CaseDocument {
  std::string method;
  CaseMetrics metrics;
  MetricConfig config;
};
CaseDocument case_document_from_json(const json& j);

json staple_performance_to_json(const std::map<std::string, RaterPerformance>& perf,
                                const StapleConfig& cfg);

json read_json_file(const std::filesystem::path& path);

/// Pretty-printed with a trailing newline, written via temp file + rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json_file(const std::filesystem::path& path, const json& j);

}  // namespace gliofuse
