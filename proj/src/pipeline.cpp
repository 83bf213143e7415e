#include "gliofuse/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "gliofuse/channels.hpp"
#include "gliofuse/nifti.hpp"
#include "gliofuse/random.hpp"
#include "gliofuse/synth.hpp"
#include "gliofuse/weighted_fusion.hpp"

namespace gliofuse {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

bool has_stage(const PipelineConfig& cfg, const std::string& stage) {
  return std::find(cfg.stages.begin(), cfg.stages.end(), stage) != cfg.stages.end();
}

std::vector<std::string> effective_targets(const PipelineConfig& cfg, const CaseManifest& c) {
  if (!cfg.eval_targets.empty()) return cfg.eval_targets;
  std::vector<std::string> out;
  if (has_stage(cfg, "fuse-staple")) out.push_back("staple");
  if (has_stage(cfg, "fuse-weighted")) out.push_back("weighted");
  if (out.empty()) {
    for (const auto& [name, path] : c.predictions) out.push_back(name);
  }
  return out;
}

std::string report_extension(ReportFormat f) {
  switch (f) {
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Markdown: return "md";
    case ReportFormat::Json: return "json";
  }
  return "txt";
}

const char* report_format_name(ReportFormat f) {
  switch (f) {
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Markdown: return "markdown";
    case ReportFormat::Json: return "json";
  }
  return "markdown";
}

LabelMap load_labels(const fs::path& path, const LabelEncoding& encoding) {
  return LabelMap::from_volume(read_nifti(path), encoding);
}

// Runs the per-case stages; returns the log records of this case.
std::vector<json> run_case(const CaseManifest& c, const PipelineConfig& cfg,
                           const fs::path& output_dir, std::vector<CaseError>& errors) {
  std::vector<json> records;
  const fs::path case_dir = output_dir / "cases" / c.id;
  const LabelEncoding& encoding = cfg.regions.encoding;
  std::string stage;
  try {
    fs::create_directories(case_dir);

    if (has_stage(cfg, "subtract")) {
      stage = "subtract";
      const auto out = case_dir / "t1gd_minus_t1.nii.gz";
      write_nifti(subtract(read_nifti(c.modalities.at("t1gd")), read_nifti(c.modalities.at("t1")),
                           cfg.clamp_negative, c.modalities.at("t1gd").string(),
                           c.modalities.at("t1").string()),
                  out);
      records.push_back({{"case", c.id}, {"stage", stage}, {"status", "ok"},
                         {"outputs", {fs::relative(out, output_dir).generic_string()}}});
    }

    if (has_stage(cfg, "fuse-staple")) {
      stage = "fuse-staple";
      std::vector<LabelMap> raters;
      for (const auto& [name, path] : c.predictions) raters.push_back(load_labels(path, encoding));
      const auto result = staple_multilabel(raters, cfg.staple);
      const auto out = case_dir / "staple.nii.gz";
      const auto perf = case_dir / "staple_performance.json";
      write_nifti(result.consensus.to_volume(), out);
      json perf_json = staple_performance_to_json(result.performance, cfg.staple);
      json names = json::array();
      for (const auto& [name, path] : c.predictions) names.push_back(name);
      perf_json["raters"] = names;
      write_json_file(perf, perf_json);
      records.push_back({{"case", c.id}, {"stage", stage}, {"status", "ok"},
                         {"outputs", {fs::relative(out, output_dir).generic_string(),
                                      fs::relative(perf, output_dir).generic_string()}}});
    }

    if (has_stage(cfg, "fuse-weighted")) {
      stage = "fuse-weighted";
      std::vector<ProbStack> stacks;
      for (const auto& [name, path] : c.predictions) {
        stacks.push_back(load_prediction_stack(path, encoding));
      }
      const WeightMatrix w =
          cfg.weights.empty()
              ? WeightMatrix::uniform(encoding.class_names(), stacks.size())
              : weight_matrix_from_json(read_json_file(cfg.weights), encoding);
      const auto result = fuse_weighted(stacks, w, encoding);
      const auto out = case_dir / "weighted.nii.gz";
      write_nifti(result.labels.to_volume(), out);
      records.push_back({{"case", c.id}, {"stage", stage}, {"status", "ok"},
                         {"zero_voxels", result.zero_voxels},
                         {"outputs", {fs::relative(out, output_dir).generic_string()}}});
    }

    if (has_stage(cfg, "eval")) {
      stage = "eval";
      if (c.gt.empty()) throw InputError("case " + c.id + " has no gt for evaluation");
      const LabelMap gt = load_labels(c.gt, encoding);
      fs::create_directories(output_dir / "metrics");
      json outputs = json::array();
      for (const auto& method : effective_targets(cfg, c)) {
        fs::path pred_path;
        if (method == "staple") {
          pred_path = case_dir / "staple.nii.gz";
        } else if (method == "weighted") {
          pred_path = case_dir / "weighted.nii.gz";
        } else {
          auto it = std::find_if(c.predictions.begin(), c.predictions.end(),
                                 [&](const auto& p) { return p.first == method; });
          if (it == c.predictions.end()) {
            throw InputError("case " + c.id + " has no prediction named '" + method + "'");
          }
          pred_path = it->second;
        }
        if (!fs::exists(pred_path)) {
          throw InputError("case " + c.id + ": missing prediction for '" + method + "': " +
                           pred_path.string());
        }
        const LabelMap pred = argmax_labels(load_prediction_stack(pred_path, encoding), encoding);
        const CaseMetrics m = evaluate_case(gt, pred, cfg.metric, cfg.regions, c.id);
        const auto out = output_dir / "metrics" / (c.id + "__" + method + ".json");
        write_json_file(out, case_metrics_to_json(m, cfg.metric, method));
        outputs.push_back(fs::relative(out, output_dir).generic_string());
      }
      records.push_back({{"case", c.id}, {"stage", stage}, {"status", "ok"}, {"outputs", outputs}});
    }
  } catch (const InputError& e) {
    errors.push_back({c.id, stage, e.what(), true});
    records.push_back({{"case", c.id}, {"stage", stage}, {"status", "error"}, {"message", e.what()}});
  } catch (const std::exception& e) {
    errors.push_back({c.id, stage, e.what(), false});
    records.push_back({{"case", c.id}, {"stage", stage}, {"status", "error"}, {"message", e.what()}});
  }
  return records;
}

}  // namespace

std::vector<CaseManifest> parse_manifest(const json& j, const fs::path& base_dir) {
  const json* list = &j;
  if (j.is_object()) {
    if (!j.contains("cases")) throw InputError("manifest object needs a 'cases' list");
    list = &j.at("cases");
  }
  if (!list->is_array()) throw InputError("manifest must be a list of cases");

  std::vector<CaseManifest> out;
  try {
    for (const auto& entry : *list) {
      CaseManifest c;
      c.id = entry.at("id").get<std::string>();
      if (c.id.empty() || c.id.find_first_of("/\\") != std::string::npos) {
        throw InputError("invalid case id '" + c.id + "'");
      }
      for (const auto& [key, value] : entry.items()) {
        if (key != "id" && key != "modalities" && key != "predictions" && key != "gt") {
          throw InputError("case " + c.id + ": unknown key '" + key + "'");
        }
      }
      if (entry.contains("modalities")) {
        for (const auto& [key, value] : entry.at("modalities").items()) {
          if (std::find(kModalityKeys.begin(), kModalityKeys.end(), key) == kModalityKeys.end()) {
            throw InputError("case " + c.id + ": unknown modality '" + key + "'");
          }
          c.modalities[key] = resolve(base_dir, value.get<std::string>());
        }
      }
      if (entry.contains("predictions")) {
        const auto& preds = entry.at("predictions");
        if (preds.is_array()) {
          // [{"name": ..., "path": ...}] keeps an explicit model order.
          for (const auto& p : preds) {
            c.predictions.emplace_back(p.at("name").get<std::string>(),
                                       resolve(base_dir, p.at("path").get<std::string>()));
          }
        } else {
          for (const auto& [key, value] : preds.items()) {
            c.predictions.emplace_back(key, resolve(base_dir, value.get<std::string>()));
          }
        }
        for (const auto& [name, path] : c.predictions) {
          if (name == "staple" || name == "weighted") {
            throw InputError("case " + c.id + ": model name '" + name + "' is reserved");
          }
        }
      }
      if (entry.contains("gt")) c.gt = resolve(base_dir, entry.at("gt").get<std::string>());
      out.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  }
  for (std::size_t a = 0; a < out.size(); ++a) {
    for (std::size_t b = a + 1; b < out.size(); ++b) {
      if (out[a].id == out[b].id) throw InputError("duplicate case id '" + out[a].id + "'");
    }
  }
  return out;
}

std::vector<CaseManifest> load_manifest(const fs::path& path) {
  return parse_manifest(read_json_file(path), path.parent_path());
}

void to_json(json& j, const PipelineConfig& c) {
  j = json{{"stages", c.stages},
           {"workers", c.workers},
           {"clamp_negative", c.clamp_negative},
           {"staple", c.staple},
           {"metric", c.metric},
           {"regions", c.regions},
           {"weights", c.weights.generic_string()},
           {"eval_targets", c.eval_targets},
           {"report_format", report_format_name(c.report_format)}};
}

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  if (!j.is_object()) throw InputError("pipeline config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    static const std::vector<std::string> known = {"stages", "workers", "clamp_negative",
                                                   "staple", "metric", "regions", "weights",
                                                   "eval_targets", "report_format"};
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw InputError("unknown key '" + key + "' in pipeline config");
    }
  }
  try {
    if (j.contains("stages")) c.stages = j.at("stages").get<std::vector<std::string>>();
    if (j.contains("workers")) c.workers = j.at("workers").get<int>();
    if (j.contains("clamp_negative")) c.clamp_negative = j.at("clamp_negative").get<bool>();
    if (j.contains("staple")) from_json(j.at("staple"), c.staple);
    if (j.contains("metric")) from_json(j.at("metric"), c.metric);
    if (j.contains("regions")) from_json(j.at("regions"), c.regions);
    if (j.contains("weights") && !j.at("weights").get<std::string>().empty()) {
      c.weights = resolve(base_dir, j.at("weights").get<std::string>());
    }
    if (j.contains("eval_targets")) {
      c.eval_targets = j.at("eval_targets").get<std::vector<std::string>>();
    }
    if (j.contains("report_format")) {
      c.report_format = report_format_from_name(j.at("report_format").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed pipeline config: ") + e.what());
  }
  for (const auto& s : c.stages) {
    if (std::find(kStageNames.begin(), kStageNames.end(), s) == kStageNames.end()) {
      throw InputError("unknown stage '" + s + "'");
    }
  }
  if (c.workers < 1) throw InputError("workers must be >= 1");
  return c;
}

ProbStack load_prediction_stack(const fs::path& path, const LabelEncoding& encoding) {
  ProbStack stack = read_prob_stack(path);
  if (stack.channel_count() == 1) {
    const Volume3D vol(stack.geometry(), stack.values(), DType::Float32);
    return labelmap_to_probstack(LabelMap::from_volume(vol, encoding));
  }
  if (stack.channel_count() != encoding.size() + 1) {
    throw InputError(path.string() + ": probability stack has " +
                     std::to_string(stack.channel_count()) + " channels, expected " +
                     std::to_string(encoding.size() + 1));
  }
  stack.validate_simplex();
  return stack;
}

PipelineResult run_pipeline(const std::vector<CaseManifest>& cases, const PipelineConfig& cfg,
                            const fs::path& output_dir, std::ostream& log) {
  PipelineResult result;
  if (cfg.stages.empty()) {
    log << "no stages requested; nothing to do\n";
    return result;
  }

  // Every referenced file must exist before anything is written.
  for (const auto& c : cases) {
    auto check = [&](const std::string& key, const fs::path& p) {
      if (!fs::exists(p)) {
        throw InputError("case " + c.id + ": '" + key + "' references missing file " + p.string());
      }
    };
    for (const auto& [key, p] : c.modalities) check(key, p);
    for (const auto& [name, p] : c.predictions) check("predictions." + name, p);
    if (!c.gt.empty()) check("gt", c.gt);
    if (has_stage(cfg, "subtract") && (!c.modalities.count("t1") || !c.modalities.count("t1gd"))) {
      throw InputError("case " + c.id + ": subtract needs modalities 't1' and 't1gd'");
    }
    if ((has_stage(cfg, "fuse-staple") || has_stage(cfg, "fuse-weighted")) &&
        c.predictions.empty()) {
      throw InputError("case " + c.id + ": fusion needs at least one prediction");
    }
  }

  fs::create_directories(output_dir);
  std::vector<std::vector<json>> records(cases.size());
  std::vector<std::vector<CaseError>> case_errors(cases.size());

  const bool per_case_stage = has_stage(cfg, "subtract") || has_stage(cfg, "fuse-staple") ||
                              has_stage(cfg, "fuse-weighted") || has_stage(cfg, "eval");
  if (per_case_stage) {
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
      for (std::size_t k = next++; k < cases.size(); k = next++) {
        records[k] = run_case(cases[k], cfg, output_dir, case_errors[k]);
        std::lock_guard lock(log_mutex);
        log << "case " << cases[k].id << ": "
            << (case_errors[k].empty() ? "ok" : "FAILED: " + case_errors[k].front().message)
            << "\n";
      }
    };
    const std::size_t n_workers =
        std::max<std::size_t>(1, std::min<std::size_t>(cfg.workers, cases.size()));
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < n_workers; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
  }
  for (auto& e : case_errors) result.errors.insert(result.errors.end(), e.begin(), e.end());

  std::vector<json> report_records;
  if (has_stage(cfg, "report")) {
    try {
      std::vector<fs::path> files;
      const fs::path metrics_dir = output_dir / "metrics";
      if (fs::exists(metrics_dir)) {
        for (const auto& entry : fs::directory_iterator(metrics_dir)) {
          if (entry.path().extension() == ".json") files.push_back(entry.path());
        }
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw InputError("report stage found no case metrics");
      const auto reports = build_reports(files);
      json combined = json::object();
      json outputs = json::array();
      for (const auto& [metric, report] : reports) {
        combined[metric_name(metric)] = report;
        const auto out = output_dir / (std::string("report_") + metric_name(metric) + "." +
                                       report_extension(cfg.report_format));
        write_text_atomic(out, render(report, cfg.report_format));
        outputs.push_back(out.filename().generic_string());
      }
      write_json_file(output_dir / "report.json", combined);
      outputs.push_back("report.json");
      report_records.push_back({{"stage", "report"}, {"status", "ok"}, {"outputs", outputs},
                                {"case_files", files.size()}});
      log << "report: " << files.size() << " case files\n";
    } catch (const InputError& e) {
      result.errors.push_back({"", "report", e.what(), true});
      report_records.push_back({{"stage", "report"}, {"status", "error"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      result.errors.push_back({"", "report", e.what(), false});
      report_records.push_back({{"stage", "report"}, {"status", "error"}, {"message", e.what()}});
    }
  }

  std::ostringstream jsonl;
  jsonl << json{{"event", "start"}, {"config", cfg}, {"cases", cases.size()}}.dump() << "\n";
  for (const auto& case_records : records) {
    for (const auto& r : case_records) jsonl << r.dump() << "\n";
  }
  for (const auto& r : report_records) jsonl << r.dump() << "\n";
  write_text_atomic(output_dir / "pipeline_log.jsonl", jsonl.str());

  json ledger = json::array();
  for (const auto& e : result.errors) {
    ledger.push_back({{"case", e.case_id}, {"stage", e.stage}, {"message", e.message},
                      {"kind", e.input_error ? "input" : "internal"}});
  }
  write_json_file(output_dir / "errors.json", ledger);

  if (!result.errors.empty()) {
    const bool all_input = std::all_of(result.errors.begin(), result.errors.end(),
                                       [](const CaseError& e) { return e.input_error; });
    result.exit_code = all_input ? 2 : 1;
  }
  return result;
}

std::map<MetricKind, AggregateReport> build_reports(const std::vector<fs::path>& files) {
  std::vector<std::string> methods;
  std::map<std::string, std::vector<CaseMetrics>> by_method;
  std::optional<MetricConfig> config;
  for (const auto& f : files) {
    CaseDocument doc = case_document_from_json(read_json_file(f));
    if (doc.method.empty()) doc.method = f.stem().string();
    if (config && !(*config == doc.config)) {
      throw InputError(f.string() + " was scored with a different metric config");
    }
    config = doc.config;
    if (!by_method.count(doc.method)) methods.push_back(doc.method);
    by_method[doc.method].push_back(std::move(doc.metrics));
  }
  if (methods.empty()) throw InputError("no case metrics to report");

  std::map<MetricKind, AggregateReport> out;
  for (MetricKind metric : {MetricKind::LD, MetricKind::LH95}) {
    AggregateReport report;
    report.metric = metric;
    report.config = *config;
    for (const auto& m : methods) report.rows.push_back(aggregate(by_method[m], metric, m));
    out[metric] = std::move(report);
  }
  return out;
}

fs::path simulate_dataset(const Shape3& shape, const json& spec, std::uint64_t seed,
                          const fs::path& out_dir) {
  if (!spec.is_object()) throw InputError("simulation spec must be a JSON object");
  for (const auto& [key, value] : spec.items()) {
    if (key != "cases" && key != "spacing" && key != "blobs" && key != "raters") {
      throw InputError("unknown key '" + key + "' in simulation spec");
    }
  }
  const LabelEncoding encoding = LabelEncoding::standard();
  int n_cases = 1;
  Vec3 spacing{1.0, 1.0, 1.0};
  std::vector<Blob> blobs;
  struct RaterSpec {
    std::string name;
    double p;
    double q;
  };
  std::vector<RaterSpec> raters;
  try {
    n_cases = spec.value("cases", 1);
    if (spec.contains("spacing")) spacing = spec.at("spacing").get<Vec3>();
    if (spec.contains("blobs")) {
      for (const auto& b : spec.at("blobs")) {
        Blob blob;
        blob.center = b.at("center").get<std::array<double, 3>>();
        blob.radius = b.at("radius").get<double>();
        const auto& label = b.at("label");
        if (label.is_string()) {
          auto code = encoding.code_of(label.get<std::string>());
          if (!code) throw InputError("unknown blob label " + label.get<std::string>());
          blob.label = *code;
        } else {
          blob.label = label.get<std::uint8_t>();
        }
        blobs.push_back(blob);
      }
    }
    for (const auto& r : spec.at("raters")) {
      raters.push_back({r.at("name").get<std::string>(), r.at("p").get<double>(),
                        r.at("q").get<double>()});
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed simulation spec: ") + e.what());
  }
  if (n_cases < 1) throw InputError("simulation needs at least one case");
  if (raters.empty()) throw InputError("simulation needs at least one rater");
  for (const auto& r : raters) {
    if (!(r.p >= 0.0 && r.p <= 1.0 && r.q >= 0.0 && r.q <= 1.0)) {
      throw InputError("rater " + r.name + ": p and q must lie in [0,1]");
    }
  }

  fs::create_directories(out_dir);
  json manifest_cases = json::array();
  for (int k = 0; k < n_cases; ++k) {
    std::ostringstream id;
    id << "case_" << std::setw(3) << std::setfill('0') << k;
    const fs::path dir = out_dir / id.str();
    fs::create_directories(dir);
    const std::uint64_t case_seed = split_seed(seed, static_cast<std::uint64_t>(k));

    LabelMap truth = blobs.empty() ? two_blob_phantom(shape) : make_phantom(shape, spacing, blobs);
    if (blobs.empty() && spacing != Vec3{1.0, 1.0, 1.0}) {
      truth = LabelMap(Image<std::uint8_t>(Geometry::make(shape, spacing), truth.codes().values()),
                       encoding);
    }
    write_nifti(truth.to_volume(), dir / "gt.nii.gz");

    // Synthetic intensities: enhancing voxels gain 80 units after contrast.
    Rng rng(split_seed(case_seed, 1000));
    std::vector<float> t1(truth.size()), t1gd(truth.size());
    const auto et = encoding.code_of("ET");
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const double base = 100.0 + (truth[i] ? 30.0 : 0.0);
      t1[i] = static_cast<float>(std::round(base + 10.0 * uniform01(rng)));
      t1gd[i] = t1[i] + static_cast<float>(std::round(10.0 * uniform01(rng))) +
                ((et && truth[i] == *et) ? 80.0f : 0.0f);
    }
    write_nifti(Volume3D(truth.geometry(), std::move(t1), DType::Float32), dir / "t1.nii.gz");
    write_nifti(Volume3D(truth.geometry(), std::move(t1gd), DType::Float32), dir / "t1gd.nii.gz");

    json predictions = json::array();
    for (std::size_t r = 0; r < raters.size(); ++r) {
      const RaterModel model{raters[r].p, raters[r].q, split_seed(case_seed, r)};
      const auto file = raters[r].name + ".nii.gz";
      write_nifti(simulate_label_rater(truth, model).to_volume(), dir / file);
      predictions.push_back({{"name", raters[r].name}, {"path", id.str() + "/" + file}});
    }
    manifest_cases.push_back({{"id", id.str()},
                              {"modalities", {{"t1", id.str() + "/t1.nii.gz"},
                                              {"t1gd", id.str() + "/t1gd.nii.gz"}}},
                              {"predictions", predictions},
                              {"gt", id.str() + "/gt.nii.gz"}});
  }
  json truth_doc = json::array();
  for (const auto& r : raters) truth_doc.push_back({{"name", r.name}, {"p", r.p}, {"q", r.q}});
  write_json_file(out_dir / "raters_truth.json", {{"seed", seed}, {"raters", truth_doc}});
  const fs::path manifest = out_dir / "manifest.json";
  write_json_file(manifest, {{"cases", manifest_cases}});
  return manifest;
}

}  // namespace gliofuse
