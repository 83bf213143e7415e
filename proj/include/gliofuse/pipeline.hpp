#pragma once

// Manifest-driven end-to-end runs: subtraction channel -> fusion -> lesion-wise
// evaluation -> cohort report.
//
// Output layout under the output directory:
//   cases/<id>/t1gd_minus_t1.nii.gz
//   cases/<id>/staple.nii.gz, cases/<id>/staple_performance.json
//   cases/<id>/weighted.nii.gz
//   metrics/<id>__<method>.json
//   report.json, report_LD.<ext>, report_LH95.<ext>
//   pipeline_log.jsonl, errors.json

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "gliofuse/lesion_metrics.hpp"
#include "gliofuse/regions.hpp"
#include "gliofuse/report.hpp"
#include "gliofuse/serialize.hpp"
#include "gliofuse/staple.hpp"

namespace gliofuse {

/// Modality keys accepted in a manifest.
inline const std::array<std::string, 5> kModalityKeys = {"t1", "t1gd", "t2", "flair", "t1gd-t1"};

struct CaseManifest {
  std::string id;
  std::map<std::string, std::filesystem::path> modalities;
  /// Model name -> prediction file (label map or 4D probability stack), in
  /// manifest order.
  std::vector<std::pair<std::string, std::filesystem::path>> predictions;
  std::filesystem::path gt;  // empty when absent
};

/// Accepts {"cases": [...]} or a bare list. Relative paths resolve against
/// `base_dir`.
std::vector<CaseManifest> parse_manifest(const json& j, const std::filesystem::path& base_dir);
std::vector<CaseManifest> load_manifest(const std::filesystem::path& path);

inline const std::array<std::string, 5> kStageNames = {"subtract", "fuse-staple", "fuse-weighted",
                                                       "eval", "report"};

struct PipelineConfig {
  std::vector<std::string> stages;
  int workers = 1;
  bool clamp_negative = false;
  StapleConfig staple{};
  MetricConfig metric{};
  RegionDefinitions regions{};
  std::filesystem::path weights;  // empty: uniform weights
  /// Methods to evaluate. Empty: the fused outputs requested in `stages`, or
  /// every model when no fusion stage runs.
  std::vector<std::string> eval_targets;
  ReportFormat report_format = ReportFormat::Markdown;
};

void to_json(json& j, const PipelineConfig& c);
/// Relative weight paths resolve against `base_dir`.
PipelineConfig pipeline_config_from_json(const json& j, const std::filesystem::path& base_dir);

struct CaseError {
  std::string case_id;
  std::string stage;
  std::string message;
  bool input_error = true;
};

struct PipelineResult {
  int exit_code = 0;  // 0 ok, 1 internal error, 2 user/input error
  std::vector<CaseError> errors;
};

/// Runs the configured stages. Completed cases keep their outputs when others
/// fail; failures land in errors.json. Human-readable progress goes to `log`.
PipelineResult run_pipeline(const std::vector<CaseManifest>& cases, const PipelineConfig& cfg,
                            const std::filesystem::path& output_dir, std::ostream& log);

/// Loads a prediction as a probability stack; 3D label maps become one-hot.
ProbStack load_prediction_stack(const std::filesystem::path& path, const LabelEncoding& encoding);

/// Generates phantoms, simulated raters and synthetic T1/T1Gd pairs from a
/// JSON spec, plus a manifest.json referencing them. Returns the manifest path.
///
/// Spec keys: "cases" (default 1), "spacing" (default [1,1,1]), "blobs"
/// (default: two-blob phantom; label by name or code), "raters": list of
/// {"name", "p", "q"}.
std::filesystem::path simulate_dataset(const Shape3& shape, const json& spec, std::uint64_t seed,
                                       const std::filesystem::path& out_dir);

/// Reads case documents and builds one report per metric, one row per method.
/// Rows are ordered by first appearance in the (sorted) file list.
std::map<MetricKind, AggregateReport> build_reports(const std::vector<std::filesystem::path>& files);

}  // namespace gliofuse
