#pragma once

// Cohort tables: one row per method, one column per report region, each cell
// the arithmetic mean of that region's per-case score.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "gliofuse/lesion_metrics.hpp"

namespace gliofuse {

enum class MetricKind { LD, LH95 };

const char* metric_name(MetricKind m);
MetricKind metric_from_name(const std::string& name);

struct ReportRow {
  std::string method;
  std::array<double, 6> values{};  // kReportRegions order
  std::size_t case_count = 0;
};

struct AggregateReport {
  MetricKind metric = MetricKind::LD;
  MetricConfig config{};
  std::string aggregation = "arithmetic-mean-over-cases";
  std::vector<ReportRow> rows;
};

/// Per-region mean over `cases`. Throws InputError on an empty list.
ReportRow aggregate(std::span<const CaseMetrics> cases, MetricKind metric,
                    const std::string& method = "");

enum class ReportFormat { Csv, Markdown, Json };

ReportFormat report_format_from_name(const std::string& name);

/// Markdown `highlight` marks the best cell of each column in bold and the
/// second best in italics (higher is better for LD, lower for LH95).
std::string render(const AggregateReport& report, ReportFormat format, bool highlight = false);

AggregateReport parse_report_json(const std::string& text);

}  // namespace gliofuse
