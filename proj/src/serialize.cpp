#include "gliofuse/serialize.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

namespace gliofuse {

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw InputError(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw InputError(std::string("unknown key '") + key + "' in " + what);
  }
}

template <class T>
void read_key(const json& j, const char* key, T& out, const char* what) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError(std::string("bad value for '") + key + "' in " + what + ": " + e.what());
  }
}

const char* prior_mode_name(PriorMode m) {
  switch (m) {
    case PriorMode::Fixed: return "fixed";
    case PriorMode::Estimated: return "estimated";
    default: return "global-prevalence";
  }
}
const char* roi_mode_name(RoiMode m) {
  return m == RoiMode::AllVoxels ? "all-voxels" : "union-bounding-box";
}
const char* objective_name(FitObjective o) {
  return o == FitObjective::MeanPlainDice ? "mean-plain-dice" : "mean-lesionwise-dice";
}
const char* optimizer_name(FitOptimizer o) {
  return o == FitOptimizer::DirichletRandomSearch ? "dirichlet-random-search" : "coordinate-search";
}

}  // namespace

void to_json(json& j, const MetricConfig& c) {
  j = json{{"connectivity", c.connectivity},
           {"dilation_iterations", c.dilation_iterations},
           {"min_lesion_voxels", c.min_lesion_voxels},
           {"fp_hd95_penalty", c.fp_hd95_penalty},
           {"fp_dice_score", c.fp_dice_score},
           {"empty_empty_ld", c.empty_empty_ld},
           {"empty_empty_lh95", c.empty_empty_lh95}};
}

void from_json(const json& j, MetricConfig& c) {
  constexpr const char* what = "metric config";
  check_keys(j,
             {"connectivity", "dilation_iterations", "min_lesion_voxels", "fp_hd95_penalty",
              "fp_dice_score", "empty_empty_ld", "empty_empty_lh95"},
             what);
  read_key(j, "connectivity", c.connectivity, what);
  read_key(j, "dilation_iterations", c.dilation_iterations, what);
  read_key(j, "min_lesion_voxels", c.min_lesion_voxels, what);
  read_key(j, "fp_hd95_penalty", c.fp_hd95_penalty, what);
  read_key(j, "fp_dice_score", c.fp_dice_score, what);
  read_key(j, "empty_empty_ld", c.empty_empty_ld, what);
  read_key(j, "empty_empty_lh95", c.empty_empty_lh95, what);
  c.validate();
}

void to_json(json& j, const StapleConfig& c) {
  j = json{{"max_iter", c.max_iter},
           {"tol", c.tol},
           {"prior_mode", prior_mode_name(c.prior_mode)},
           {"fixed_prior", c.fixed_prior},
           {"init_p", c.init_p},
           {"init_q", c.init_q},
           {"threshold", c.threshold},
           {"roi_mode", roi_mode_name(c.roi_mode)}};
}

void from_json(const json& j, StapleConfig& c) {
  constexpr const char* what = "staple config";
  check_keys(j,
             {"max_iter", "tol", "prior_mode", "fixed_prior", "init_p", "init_q", "threshold",
              "roi_mode"},
             what);
  read_key(j, "max_iter", c.max_iter, what);
  read_key(j, "tol", c.tol, what);
  read_key(j, "fixed_prior", c.fixed_prior, what);
  read_key(j, "init_p", c.init_p, what);
  read_key(j, "init_q", c.init_q, what);
  read_key(j, "threshold", c.threshold, what);
  std::string prior = prior_mode_name(c.prior_mode);
  read_key(j, "prior_mode", prior, what);
  if (prior == "global-prevalence") {
    c.prior_mode = PriorMode::GlobalPrevalence;
  } else if (prior == "fixed") {
    c.prior_mode = PriorMode::Fixed;
  } else if (prior == "estimated") {
    c.prior_mode = PriorMode::Estimated;
  } else {
    throw InputError("prior_mode must be 'global-prevalence', 'fixed' or 'estimated'");
  }
  std::string roi = roi_mode_name(c.roi_mode);
  read_key(j, "roi_mode", roi, what);
  if (roi == "all-voxels") {
    c.roi_mode = RoiMode::AllVoxels;
  } else if (roi == "union-bounding-box") {
    c.roi_mode = RoiMode::UnionBoundingBox;
  } else {
    throw InputError("roi_mode must be 'all-voxels' or 'union-bounding-box'");
  }
  c.validate();
}

void to_json(json& j, const FitConfig& c) {
  j = json{{"objective", objective_name(c.objective)},
           {"optimizer", optimizer_name(c.optimizer)},
           {"restarts", c.restarts},
           {"budget", c.budget},
           {"steps", c.steps},
           {"seed", c.seed},
           {"fit_background", c.fit_background},
           {"metric", c.metric},
           {"workers", c.workers}};
}

void from_json(const json& j, FitConfig& c) {
  constexpr const char* what = "fit config";
  check_keys(j,
             {"objective", "optimizer", "restarts", "budget", "steps", "seed", "fit_background",
              "metric", "workers"},
             what);
  read_key(j, "restarts", c.restarts, what);
  read_key(j, "budget", c.budget, what);
  read_key(j, "steps", c.steps, what);
  read_key(j, "seed", c.seed, what);
  read_key(j, "fit_background", c.fit_background, what);
  read_key(j, "workers", c.workers, what);
  if (j.contains("metric")) from_json(j.at("metric"), c.metric);
  std::string objective = objective_name(c.objective);
  read_key(j, "objective", objective, what);
  if (objective == "mean-lesionwise-dice") {
    c.objective = FitObjective::MeanLesionwiseDice;
  } else if (objective == "mean-plain-dice") {
    c.objective = FitObjective::MeanPlainDice;
  } else {
    throw InputError("objective must be 'mean-lesionwise-dice' or 'mean-plain-dice'");
  }
  std::string optimizer = optimizer_name(c.optimizer);
  read_key(j, "optimizer", optimizer, what);
  if (optimizer == "coordinate-search") {
    c.optimizer = FitOptimizer::CoordinateSearch;
  } else if (optimizer == "dirichlet-random-search") {
    c.optimizer = FitOptimizer::DirichletRandomSearch;
  } else {
    throw InputError("optimizer must be 'coordinate-search' or 'dirichlet-random-search'");
  }
  c.validate();
}

void to_json(json& j, const LabelEncoding& e) {
  j = json::object();
  for (const auto& entry : e.entries()) j[std::to_string(entry.code)] = entry.name;
}

void from_json(const json& j, LabelEncoding& e) {
  if (!j.is_object()) throw InputError("label encoding must be an object {code: name}");
  std::vector<LabelEncoding::Entry> entries;
  for (const auto& [key, value] : j.items()) {
    int code = 0;
    try {
      std::size_t used = 0;
      code = std::stoi(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw InputError("label encoding key '" + key + "' is not an integer code");
    }
    if (code < 1 || code > 255) throw InputError("label code " + key + " outside 1..255");
    if (!value.is_string()) throw InputError("label encoding value for " + key + " must be a name");
    entries.push_back({static_cast<std::uint8_t>(code), value.get<std::string>()});
  }
  e = LabelEncoding(std::move(entries));
}

void to_json(json& j, const RegionDefinitions& d) {
  j = json{{"encoding", d.encoding}, {"composites", d.composites}};
}

void from_json(const json& j, RegionDefinitions& d) {
  constexpr const char* what = "region definitions";
  check_keys(j, {"encoding", "composites"}, what);
  if (j.contains("encoding")) from_json(j.at("encoding"), d.encoding);
  read_key(j, "composites", d.composites, what);
  for (const auto& [name, parts] : d.composites) d.codes_of(name);
}

void to_json(json& j, const LesionScores& s) {
  json lesions = json::array();
  for (const auto& m : s.lesions) {
    lesions.push_back({{"gt_lesion_id", m.gt_lesion_id},
                       {"pred_component_ids", m.pred_component_ids},
                       {"dice", m.dice},
                       {"hd95", m.hd95},
                       {"gt_volume_voxels", m.gt_volume_voxels},
                       {"pred_volume_voxels", m.pred_volume_voxels}});
  }
  j = json{{"LD", s.ld}, {"LH95", s.lh95}, {"fp_count", s.fp_count}, {"lesions", lesions}};
}

void from_json(const json& j, LesionScores& s) {
  try {
    s.ld = j.at("LD").get<double>();
    s.lh95 = j.at("LH95").get<double>();
    s.fp_count = j.value("fp_count", std::size_t{0});
    s.lesions.clear();
    for (const auto& l : j.value("lesions", json::array())) {
      LesionMatch m;
      m.gt_lesion_id = l.at("gt_lesion_id").get<int>();
      m.pred_component_ids = l.at("pred_component_ids").get<std::vector<int>>();
      m.dice = l.at("dice").get<double>();
      m.hd95 = l.at("hd95").get<double>();
      m.gt_volume_voxels = l.at("gt_volume_voxels").get<std::size_t>();
      m.pred_volume_voxels = l.at("pred_volume_voxels").get<std::size_t>();
      s.lesions.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed region metrics: ") + e.what());
  }
}

void to_json(json& j, const RaterPerformance& p) {
  j = json{{"p", p.p}, {"q", p.q}, {"iterations", p.iterations}, {"converged", p.converged}};
}

void to_json(json& j, const WeightMatrix& w) {
  j = json::object();
  for (std::size_t c = 0; c < w.class_count(); ++c) j[w.class_names[c]] = w.weights[c];
  if (!w.model_names.empty()) j["models"] = w.model_names;
}

WeightMatrix weight_matrix_from_json(const json& j, const LabelEncoding& encoding) {
  if (!j.is_object()) throw InputError("weights must be a JSON object {class: [weights]}");
  WeightMatrix w;
  w.class_names = encoding.class_names();
  for (const auto& [key, value] : j.items()) {
    if (key == "models") continue;
    if (std::find(w.class_names.begin(), w.class_names.end(), key) == w.class_names.end()) {
      throw InputError("weights name unknown class '" + key + "'");
    }
  }
  try {
    for (const auto& name : w.class_names) {
      if (!j.contains(name)) throw InputError("weights lack class '" + name + "'");
      w.weights.push_back(j.at(name).get<std::vector<double>>());
    }
    if (j.contains("models")) w.model_names = j.at("models").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed weights: ") + e.what());
  }
  w.validate();
  return w;
}

void from_json(const json& j, WeightMatrix& w) {
  w = weight_matrix_from_json(j, LabelEncoding::standard());
}

void to_json(json& j, const AggregateReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json values = json::object();
    for (std::size_t k = 0; k < kReportRegions.size(); ++k) values[kReportRegions[k]] = row.values[k];
    rows.push_back({{"method", row.method}, {"case_count", row.case_count}, {"values", values}});
  }
  j = json{{"metric", metric_name(r.metric)},
           {"aggregation", r.aggregation},
           {"columns", kReportRegions},
           {"metric_config", r.config},
           {"rows", rows}};
}

void from_json(const json& j, AggregateReport& r) {
  try {
    r.metric = metric_from_name(j.at("metric").get<std::string>());
    r.aggregation = j.at("aggregation").get<std::string>();
    from_json(j.at("metric_config"), r.config);
    const auto columns = j.at("columns").get<std::vector<std::string>>();
    if (columns != std::vector<std::string>(kReportRegions.begin(), kReportRegions.end())) {
      throw InputError("report columns must be ET, NETC, RC, SNFH, TC, WT");
    }
    r.rows.clear();
    for (const auto& row : j.at("rows")) {
      ReportRow out;
      out.method = row.at("method").get<std::string>();
      out.case_count = row.at("case_count").get<std::size_t>();
      for (std::size_t k = 0; k < kReportRegions.size(); ++k) {
        out.values[k] = row.at("values").at(kReportRegions[k]).get<double>();
      }
      r.rows.push_back(std::move(out));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed report: ") + e.what());
  }
}

json case_metrics_to_json(const CaseMetrics& m, const MetricConfig& cfg,
                          const std::string& method) {
  json regions = json::object();
  for (const auto& [name, scores] : m.regions) regions[name] = scores;
  return json{{"case_id", m.case_id},
              {"method", method},
              {"metric_config", cfg},
              {"regions", regions}};
}

CaseDocument case_document_from_json(const json& j) {
  CaseDocument doc;
  try {
    doc.method = j.value("method", std::string{});
    doc.metrics.case_id = j.value("case_id", std::string{});
    if (j.contains("metric_config")) from_json(j.at("metric_config"), doc.config);
    for (const auto& region : kReportRegions) {
      if (!j.at("regions").contains(region)) {
        throw InputError("case " + doc.metrics.case_id + " lacks region " + region);
      }
      from_json(j.at("regions").at(region), doc.metrics.regions[region]);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed case metrics: ") + e.what());
  }
  return doc;
}

json staple_performance_to_json(const std::map<std::string, RaterPerformance>& perf,
                                const StapleConfig& cfg) {
  json labels = json::object();
  for (const auto& [name, p] : perf) labels[name] = p;
  return json{{"staple_config", cfg}, {"labels", labels}};
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

}  // namespace gliofuse
