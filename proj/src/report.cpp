#include "gliofuse/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "gliofuse/serialize.hpp"

namespace gliofuse {

namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string config_line(const MetricConfig& c) {
  std::ostringstream os;
  os << "connectivity=" << c.connectivity << ", dilation_iterations=" << c.dilation_iterations
     << ", min_lesion_voxels=" << c.min_lesion_voxels << ", fp_hd95_penalty=" << c.fp_hd95_penalty
     << ", fp_dice_score=" << c.fp_dice_score << ", empty_empty_ld=" << c.empty_empty_ld
     << ", empty_empty_lh95=" << c.empty_empty_lh95;
  return os.str();
}

}  // namespace

const char* metric_name(MetricKind m) { return m == MetricKind::LD ? "LD" : "LH95"; }

MetricKind metric_from_name(const std::string& name) {
  if (name == "LD") return MetricKind::LD;
  if (name == "LH95") return MetricKind::LH95;
  throw InputError("metric must be LD or LH95, got '" + name + "'");
}

ReportFormat report_format_from_name(const std::string& name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "markdown" || name == "md") return ReportFormat::Markdown;
  if (name == "json") return ReportFormat::Json;
  throw InputError("format must be csv, markdown or json, got '" + name + "'");
}

ReportRow aggregate(std::span<const CaseMetrics> cases, MetricKind metric,
                    const std::string& method) {
  if (cases.empty()) throw InputError("cannot aggregate an empty case list");
  ReportRow row;
  row.method = method;
  row.case_count = cases.size();
  for (std::size_t k = 0; k < kReportRegions.size(); ++k) {
    // Summing sorted values makes the mean independent of case order.
    std::vector<double> values;
    values.reserve(cases.size());
    for (const auto& c : cases) {
      auto it = c.regions.find(kReportRegions[k]);
      if (it == c.regions.end()) {
        throw InputError("case " + c.case_id + " lacks region " + kReportRegions[k]);
      }
      values.push_back(metric == MetricKind::LD ? it->second.ld : it->second.lh95);
    }
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    row.values[k] = sum / static_cast<double>(cases.size());
  }
  return row;
}

std::string render(const AggregateReport& report, ReportFormat format, bool highlight) {
  std::ostringstream os;
  switch (format) {
    case ReportFormat::Json: {
      json j = report;
      os << j.dump(2) << "\n";
      break;
    }
    case ReportFormat::Csv: {
      os << "method";
      for (const auto& r : kReportRegions) os << "," << r;
      os << "\n";
      for (const auto& row : report.rows) {
        os << csv_field(row.method);
        for (double v : row.values) os << "," << fixed4(v);
        os << "\n";
      }
      break;
    }
    case ReportFormat::Markdown: {
      // Rank of each cell within its column: 0 best, 1 second best.
      std::vector<std::array<int, 6>> rank(report.rows.size());
      for (auto& r : rank) r.fill(-1);
      if (highlight) {
        for (std::size_t k = 0; k < kReportRegions.size(); ++k) {
          std::vector<std::size_t> order(report.rows.size());
          for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
          std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double va = report.rows[a].values[k];
            const double vb = report.rows[b].values[k];
            return report.metric == MetricKind::LD ? va > vb : va < vb;
          });
          for (std::size_t p = 0; p < std::min<std::size_t>(2, order.size()); ++p) {
            rank[order[p]][k] = static_cast<int>(p);
          }
        }
      }
      std::size_t cases = report.rows.empty() ? 0 : report.rows.front().case_count;
      os << "**" << metric_name(report.metric) << "** (" << report.aggregation << ", cases: ";
      for (std::size_t i = 0; i < report.rows.size(); ++i) {
        if (report.rows[i].case_count != cases) cases = 0;
      }
      if (cases > 0) {
        os << cases;
      } else {
        os << "per row";
      }
      os << ")\n\n";
      os << "| Method |";
      for (const auto& r : kReportRegions) os << " " << r << " |";
      os << "\n|---|";
      for (std::size_t k = 0; k < kReportRegions.size(); ++k) os << "---:|";
      os << "\n";
      for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& row = report.rows[i];
        os << "| " << row.method << " |";
        for (std::size_t k = 0; k < row.values.size(); ++k) {
          const std::string cell = fixed4(row.values[k]);
          if (rank[i][k] == 0) {
            os << " **" << cell << "** |";
          } else if (rank[i][k] == 1) {
            os << " *" << cell << "* |";
          } else {
            os << " " << cell << " |";
          }
        }
        os << "\n";
      }
      os << "\nMetric config: " << config_line(report.config) << "\n";
      break;
    }
  }
  return os.str();
}

AggregateReport parse_report_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("invalid report JSON: ") + e.what());
  }
  AggregateReport r;
  from_json(j, r);
  return r;
}

}  // namespace gliofuse
