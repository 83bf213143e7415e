// gliofuse command-line entry point.
//
// Exit codes: 0 ok, 1 internal error, 2 user/input error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gliofuse/channels.hpp"
#include "gliofuse/lesion_metrics.hpp"
#include "gliofuse/nifti.hpp"
#include "gliofuse/pipeline.hpp"
#include "gliofuse/report.hpp"
#include "gliofuse/serialize.hpp"
#include "gliofuse/staple.hpp"
#include "gliofuse/weighted_fusion.hpp"

namespace fs = std::filesystem;
using namespace gliofuse;

namespace {

Shape3 parse_shape(const std::string& text) {
  Shape3 shape{};
  std::stringstream ss(text);
  std::string part;
  std::size_t k = 0;
  while (std::getline(ss, part, ',')) {
    if (k >= 3) throw InputError("shape must be X,Y,Z");
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(part, &used);
    } catch (const std::exception&) {
      throw InputError("shape must be X,Y,Z, got '" + text + "'");
    }
    if (used != part.size() || v <= 0) throw InputError("shape must be positive integers");
    shape[k++] = static_cast<std::size_t>(v);
  }
  if (k != 3) throw InputError("shape must be X,Y,Z");
  return shape;
}

json default_config() {
  return json{{"metric", MetricConfig{}},
              {"staple", StapleConfig{}},
              {"fit", FitConfig{}},
              {"regions", RegionDefinitions{}},
              {"pipeline", PipelineConfig{}}};
}

MetricConfig load_metric_config(const std::string& path) {
  MetricConfig cfg;
  if (!path.empty()) from_json(read_json_file(path), cfg);
  cfg.validate();
  return cfg;
}

std::vector<HeldOutCase> load_heldout(const fs::path& manifest, const LabelEncoding& encoding,
                                      std::vector<std::string>& model_names) {
  const auto cases = load_manifest(manifest);
  if (cases.empty()) throw InputError("held-out manifest lists no cases");
  std::vector<HeldOutCase> out;
  for (const auto& c : cases) {
    std::vector<std::string> names;
    for (const auto& [name, path] : c.predictions) names.push_back(name);
    if (model_names.empty()) model_names = names;
    if (names != model_names) {
      throw InputError("case " + c.id + " lists models in a different order or set");
    }
    if (c.gt.empty()) throw InputError("case " + c.id + " has no gt");
    HeldOutCase h;
    h.id = c.id;
    for (const auto& [name, path] : c.predictions) {
      if (!fs::exists(path)) {
        throw InputError("case " + c.id + ": model '" + name + "' file missing: " + path.string());
      }
      h.stacks.push_back(load_prediction_stack(path, encoding));
    }
    if (!fs::exists(c.gt)) throw InputError("case " + c.id + ": gt file missing: " + c.gt.string());
    h.gt = LabelMap::from_volume(read_nifti(c.gt), encoding);
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gliofuse: consensus fusion and lesion-wise scoring for glioma segmentations"};
  app.require_subcommand(0, 1);
  bool print_config = false;
  app.add_flag("--print-config", print_config, "Print every default setting as JSON");

  // subtract
  auto* sub = app.add_subcommand("subtract", "T1Gd - T1 subtraction channel");
  std::string t1gd_path, t1_path, sub_out;
  bool clamp = false;
  sub->add_option("--t1gd", t1gd_path)->required();
  sub->add_option("--t1", t1_path)->required();
  sub->add_option("--out", sub_out)->required();
  sub->add_flag("--clamp", clamp, "Set negative differences to zero");

  // fuse staple / fuse weighted
  auto* fuse = app.add_subcommand("fuse", "Fuse candidate segmentations");
  fuse->require_subcommand(1);
  auto* staple_cmd = fuse->add_subcommand("staple", "STAPLE consensus of label maps");
  std::vector<std::string> staple_inputs;
  std::string staple_out, staple_report, staple_config;
  StapleConfig staple_cfg;
  staple_cmd->add_option("--inputs", staple_inputs)->required();
  staple_cmd->add_option("--out", staple_out)->required();
  staple_cmd->add_option("--config", staple_config, "StapleConfig JSON");
  auto* max_iter_opt = staple_cmd->add_option("--max-iter", staple_cfg.max_iter);
  auto* tol_opt = staple_cmd->add_option("--tol", staple_cfg.tol);
  staple_cmd->add_option("--report", staple_report, "Write per-rater performance JSON");

  auto* weighted_cmd = fuse->add_subcommand("weighted", "Per-class weighted probability averaging");
  std::vector<std::string> weighted_inputs;
  std::string weights_path, weighted_out, weighted_probs;
  weighted_cmd->add_option("--inputs", weighted_inputs)->required();
  weighted_cmd->add_option("--weights", weights_path)->required();
  weighted_cmd->add_option("--out", weighted_out)->required();
  weighted_cmd->add_option("--probs-out", weighted_probs, "Also write the fused 4D stack");

  // fit-weights
  auto* fit_cmd = app.add_subcommand("fit-weights", "Fit per-class weights on held-out cases");
  std::string fit_manifest, fit_out, fit_config;
  std::uint64_t fit_seed = 0;
  fit_cmd->add_option("--manifest", fit_manifest)->required();
  fit_cmd->add_option("--out", fit_out)->required();
  fit_cmd->add_option("--seed", fit_seed);
  fit_cmd->add_option("--config", fit_config, "FitConfig JSON");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Lesion-wise metrics for one case");
  std::string eval_gt, eval_pred, eval_config, eval_out, eval_method = "prediction", eval_id;
  eval_cmd->add_option("--gt", eval_gt)->required();
  eval_cmd->add_option("--pred", eval_pred)->required();
  eval_cmd->add_option("--config", eval_config, "MetricConfig JSON");
  eval_cmd->add_option("--out", eval_out)->required();
  eval_cmd->add_option("--method", eval_method, "Method name stored in the case document");
  eval_cmd->add_option("--case-id", eval_id, "Defaults to the prediction file stem");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Synthetic phantoms and raters");
  std::string sim_shape, sim_spec, sim_out;
  std::uint64_t sim_seed = 0;
  sim_cmd->add_option("--shape", sim_shape)->required();
  sim_cmd->add_option("--raters", sim_spec)->required();
  sim_cmd->add_option("--seed", sim_seed);
  sim_cmd->add_option("--out-dir", sim_out)->required();

  // report
  auto* report_cmd = app.add_subcommand("report", "Cohort table from case documents");
  std::vector<std::string> report_cases;
  std::string report_metric = "LD", report_format = "markdown", report_out;
  bool report_highlight = false;
  report_cmd->add_option("--cases", report_cases)->required();
  report_cmd->add_option("--metric", report_metric);
  report_cmd->add_option("--format", report_format);
  report_cmd->add_option("--out", report_out, "Write to file instead of stdout");
  report_cmd->add_flag("--highlight", report_highlight, "Bold best, italicize second best");

  // pipeline
  auto* pipe_cmd = app.add_subcommand("pipeline", "Run stages over a manifest");
  std::string pipe_manifest, pipe_config, pipe_out;
  int pipe_workers = 0;
  pipe_cmd->add_option("--manifest", pipe_manifest)->required();
  pipe_cmd->add_option("--config", pipe_config)->required();
  pipe_cmd->add_option("--out-dir", pipe_out)->required();
  pipe_cmd->add_option("--workers", pipe_workers, "Overrides the config's worker count");

  // regions
  auto* regions_cmd = app.add_subcommand("regions", "Label encoding and region definitions");
  bool regions_show = false;
  regions_cmd->add_flag("--show", regions_show);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (print_config) {
      std::cout << default_config().dump(2) << "\n";
      return 0;
    }

    if (sub->parsed()) {
      write_nifti(subtract(read_nifti(t1gd_path), read_nifti(t1_path), clamp, t1gd_path, t1_path),
                  sub_out);
    } else if (staple_cmd->parsed()) {
      StapleConfig cfg;
      if (!staple_config.empty()) from_json(read_json_file(staple_config), cfg);
      if (max_iter_opt->count()) cfg.max_iter = staple_cfg.max_iter;
      if (tol_opt->count()) cfg.tol = staple_cfg.tol;
      cfg.validate();
      std::vector<LabelMap> raters;
      for (const auto& p : staple_inputs) {
        raters.push_back(LabelMap::from_volume(read_nifti(p)));
      }
      const auto result = staple_multilabel(raters, cfg);
      write_nifti(result.consensus.to_volume(), staple_out);
      if (!staple_report.empty()) {
        json perf = staple_performance_to_json(result.performance, cfg);
        perf["raters"] = staple_inputs;
        write_json_file(staple_report, perf);
      }
    } else if (weighted_cmd->parsed()) {
      const auto encoding = LabelEncoding::standard();
      std::vector<ProbStack> stacks;
      for (const auto& p : weighted_inputs) stacks.push_back(load_prediction_stack(p, encoding));
      const auto w = weight_matrix_from_json(read_json_file(weights_path), encoding);
      const auto result = fuse_weighted(stacks, w, encoding);
      if (result.zero_voxels > 0) {
        std::cerr << "warning: " << result.zero_voxels
                  << " voxels had zero total weight and were set to background\n";
      }
      write_nifti(result.labels.to_volume(), weighted_out);
      if (!weighted_probs.empty()) write_prob_stack(result.fused, weighted_probs);
    } else if (fit_cmd->parsed()) {
      FitConfig cfg;
      if (!fit_config.empty()) from_json(read_json_file(fit_config), cfg);
      cfg.seed = fit_seed;
      const RegionDefinitions defs;
      std::vector<std::string> models;
      const auto cases = load_heldout(fit_manifest, defs.encoding, models);
      auto result = fit_weights(cases, cfg, defs);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      result.weights.model_names = models;
      write_json_file(fit_out, result.weights);
      std::cerr << "objective " << result.objective << " after " << result.evaluations
                << " evaluations\n";
    } else if (eval_cmd->parsed()) {
      const auto cfg = load_metric_config(eval_config);
      const RegionDefinitions defs;
      const auto gt = LabelMap::from_volume(read_nifti(eval_gt), defs.encoding);
      const auto pred = argmax_labels(load_prediction_stack(eval_pred, defs.encoding), defs.encoding);
      std::string id = eval_id;
      if (id.empty()) {
        id = fs::path(eval_pred).filename().string();
        for (const std::string ext : {".nii.gz", ".nii"}) {
          if (id.size() > ext.size() && id.compare(id.size() - ext.size(), ext.size(), ext) == 0) {
            id.resize(id.size() - ext.size());
            break;
          }
        }
      }
      write_json_file(eval_out,
                      case_metrics_to_json(evaluate_case(gt, pred, cfg, defs, id), cfg, eval_method));
    } else if (sim_cmd->parsed()) {
      const auto manifest =
          simulate_dataset(parse_shape(sim_shape), read_json_file(sim_spec), sim_seed, sim_out);
      std::cout << manifest.string() << "\n";
    } else if (report_cmd->parsed()) {
      std::vector<fs::path> files(report_cases.begin(), report_cases.end());
      for (const auto& f : files) {
        if (!fs::exists(f)) throw InputError("case document not found: " + f.string());
      }
      std::sort(files.begin(), files.end());
      const auto metric = metric_from_name(report_metric);
      const auto format = report_format_from_name(report_format);
      const auto reports = build_reports(files);
      const std::string text = render(reports.at(metric), format, report_highlight);
      if (report_out.empty()) {
        std::cout << text;
      } else {
        write_text_atomic(report_out, text);
      }
    } else if (pipe_cmd->parsed()) {
      const fs::path config_path(pipe_config);
      auto cfg = pipeline_config_from_json(read_json_file(config_path), config_path.parent_path());
      if (pipe_workers > 0) cfg.workers = pipe_workers;
      const auto cases = load_manifest(pipe_manifest);
      const auto result = run_pipeline(cases, cfg, pipe_out, std::cerr);
      for (const auto& e : result.errors) {
        std::cerr << "error: " << (e.case_id.empty() ? "" : "case " + e.case_id + ", ")
                  << "stage " << e.stage << ": " << e.message << "\n";
      }
      return result.exit_code;
    } else if (regions_cmd->parsed()) {
      const RegionDefinitions defs;
      std::cout << defs.describe();
    } else {
      std::cout << app.help();
    }
    return 0;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
