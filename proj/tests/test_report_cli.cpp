#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include "gliofuse/nifti.hpp"
#include "gliofuse/pipeline.hpp"
#include "gliofuse/report.hpp"
#include "gliofuse/serialize.hpp"
#include "gliofuse/synth.hpp"
#include "test_util.hpp"

using namespace gliofuse;
namespace fs = std::filesystem;

namespace {

CaseMetrics uniform_case(const std::string& id, double ld, double lh95) {
  CaseMetrics m;
  m.case_id = id;
  for (const auto& r : kReportRegions) m.regions[r] = LesionScores{ld, lh95, {}, 0};
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + GLIOFUSE_CLI + "\" " + args + " > \"" +
                          log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count_char(const std::string& s, char c) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), c));
}

}  // namespace

TEST_CASE("aggregate takes the arithmetic mean") {
  std::vector<CaseMetrics> cases = {uniform_case("a", 0.8, 2.0), uniform_case("b", 0.6, 4.0)};
  const auto row = aggregate(cases, MetricKind::LD, "m");
  for (double v : row.values) CHECK(v == doctest::Approx(0.7));
  CHECK(row.case_count == 2);
  CHECK(aggregate(cases, MetricKind::LH95, "m").values[0] == doctest::Approx(3.0));
  const auto single = aggregate(std::vector<CaseMetrics>{cases[0]}, MetricKind::LD, "m");
  CHECK(single.values[0] == 0.8);
  CHECK_THROWS_AS(aggregate(std::vector<CaseMetrics>{}, MetricKind::LD, "m"), InputError);
}

TEST_CASE("two-case toy set matches hand-computed means") {
  CaseMetrics a = uniform_case("a", 1.0, 0.0);
  CaseMetrics b = uniform_case("b", 1.0, 0.0);
  a.regions["ET"] = {0.5, 10.0, {}, 1};
  b.regions["ET"] = {0.25, 374.0, {}, 0};
  a.regions["RC"] = {0.0, 374.0, {}, 0};
  const std::vector<CaseMetrics> cases = {a, b};
  const auto ld = aggregate(cases, MetricKind::LD, "m");
  const auto lh = aggregate(cases, MetricKind::LH95, "m");
  CHECK(ld.values[0] == 0.375);
  CHECK(lh.values[0] == 192.0);
  CHECK(ld.values[2] == 0.5);
  CHECK(lh.values[2] == 187.0);
  CHECK(ld.values[1] == 1.0);
}

TEST_CASE("property: aggregate is permutation invariant") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<CaseMetrics> cases;
  for (int k = 0; k < 17; ++k) {
    CaseMetrics m;
    m.case_id = std::to_string(k);
    for (const auto& r : kReportRegions) m.regions[r] = LesionScores{u(rng), 374 * u(rng), {}, 0};
    cases.push_back(m);
  }
  const auto base = aggregate(cases, MetricKind::LD, "m");
  for (int t = 0; t < 10; ++t) {
    std::shuffle(cases.begin(), cases.end(), rng);
    CHECK(aggregate(cases, MetricKind::LD, "m").values == base.values);
  }
}

TEST_CASE("render: csv, markdown, json") {
  AggregateReport rep;
  rep.metric = MetricKind::LD;
  rep.rows = {aggregate(std::vector<CaseMetrics>{uniform_case("a", 0.5, 1)}, MetricKind::LD, "m1")};
  const std::string csv = render(rep, ReportFormat::Csv);
  CHECK(csv == "method,ET,NETC,RC,SNFH,TC,WT\nm1,0.5000,0.5000,0.5000,0.5000,0.5000,0.5000\n");

  rep.rows.push_back(
      aggregate(std::vector<CaseMetrics>{uniform_case("a", 0.7, 1)}, MetricKind::LD, "m2"));
  const std::string md = render(rep, ReportFormat::Markdown, true);
  std::istringstream lines(md);
  std::string line;
  std::size_t table_lines = 0;
  while (std::getline(lines, line)) {
    if (!line.empty() && line[0] == '|') {
      ++table_lines;
      CHECK(count_char(line, '|') == 8);  // 1 + 6 columns
    }
  }
  CHECK(table_lines == 4);
  CHECK(md.find("| Method | ET | NETC | RC | SNFH | TC | WT |") != std::string::npos);
  CHECK(md.find("**LD**") != std::string::npos);
  CHECK(md.find("| m2 | **0.7000** |") != std::string::npos);
  CHECK(md.find("| m1 | *0.5000* |") != std::string::npos);
  CHECK(md.find("min_lesion_voxels=50") != std::string::npos);
  CHECK(md.find("fp_hd95_penalty=374") != std::string::npos);

  const std::string js = render(rep, ReportFormat::Json);
  const auto back = parse_report_json(js);
  CHECK(render(back, ReportFormat::Json) == js);
  CHECK(back.rows.size() == 2);
  CHECK(back.config == rep.config);
}

TEST_CASE("LH95 highlighting prefers lower values") {
  AggregateReport rep;
  rep.metric = MetricKind::LH95;
  rep.rows = {aggregate(std::vector<CaseMetrics>{uniform_case("a", 0.5, 9)}, MetricKind::LH95, "hi"),
              aggregate(std::vector<CaseMetrics>{uniform_case("a", 0.5, 3)}, MetricKind::LH95, "lo")};
  const std::string md = render(rep, ReportFormat::Markdown, true);
  CHECK(md.find("| lo | **3.0000** |") != std::string::npos);
}

TEST_CASE("config json: defaults, partial objects and unknown keys") {
  json j = MetricConfig{};
  CHECK(j.at("connectivity") == 26);
  CHECK(j.at("dilation_iterations") == 3);
  CHECK(j.at("min_lesion_voxels") == 50);
  CHECK(j.at("fp_hd95_penalty") == 374.0);
  MetricConfig m;
  from_json(json{{"connectivity", 6}}, m);
  CHECK(m.connectivity == 6);
  CHECK(m.min_lesion_voxels == 50);
  CHECK_THROWS_AS(from_json(json{{"conectivity", 6}}, m), InputError);

  StapleConfig s;
  from_json(json{{"prior_mode", "estimated"}, {"max_iter", 5}}, s);
  CHECK(s.prior_mode == PriorMode::Estimated);
  json sj = s;
  StapleConfig s2;
  from_json(sj, s2);
  CHECK(s2 == s);
  CHECK_THROWS_AS(from_json(json{{"prior_mode", "bogus"}}, s), InputError);

  FitConfig f;
  from_json(json{{"optimizer", "dirichlet-random-search"}, {"seed", 4}}, f);
  CHECK(f.optimizer == FitOptimizer::DirichletRandomSearch);
  CHECK(f.seed == 4);
}

TEST_CASE("weight matrix json") {
  WeightMatrix w = WeightMatrix::uniform(LabelEncoding::standard().class_names(), 2);
  w.weights[3] = {0.25, 0.75};
  w.model_names = {"a", "b"};
  json j = w;
  CHECK(j.at("ET") == json::array({0.25, 0.75}));
  const auto back = weight_matrix_from_json(j, LabelEncoding::standard());
  CHECK(back.weights == w.weights);
  CHECK(back.model_names == w.model_names);
  j.erase("RC");
  CHECK_THROWS_AS(weight_matrix_from_json(j, LabelEncoding::standard()), InputError);
}

TEST_CASE("case documents round trip") {
  CaseMetrics m = uniform_case("c7", 0.25, 12.5);
  m.regions["ET"].lesions.push_back(LesionMatch{1, {2, 3}, 0.5, 1.5, 64, 60});
  MetricConfig cfg;
  cfg.min_lesion_voxels = 10;
  const json j = case_metrics_to_json(m, cfg, "staple");
  const auto doc = case_document_from_json(j);
  CHECK(doc.method == "staple");
  CHECK(doc.config == cfg);
  CHECK(doc.metrics.case_id == "c7");
  CHECK(doc.metrics.regions.at("NETC").ld == 0.25);
  CHECK(doc.metrics.regions.at("ET").lesions.size() == 1);
  CHECK(j.at("regions").at("ET").contains("LD"));
  CHECK(j.at("regions").at("ET").contains("fp_count"));
}

TEST_CASE("manifest parsing") {
  testutil::TempDir dir("manifest");
  const json j = {{"cases",
                   {{{"id", "a"},
                     {"modalities", {{"t1", "a/t1.nii"}, {"t1gd", "/abs/t1gd.nii"}}},
                     {"predictions", {{{"name", "m1"}, {"path", "a/m1.nii"}}}},
                     {"gt", "a/gt.nii"}}}}};
  const auto cases = parse_manifest(j, dir.path());
  REQUIRE(cases.size() == 1);
  CHECK(cases[0].modalities.at("t1") == dir.path() / "a/t1.nii");
  CHECK(cases[0].modalities.at("t1gd") == fs::path("/abs/t1gd.nii"));
  CHECK(cases[0].predictions[0].first == "m1");
  CHECK(cases[0].gt == dir.path() / "a/gt.nii");

  json bad = j;
  bad["cases"][0]["modalities"]["dwi"] = "x.nii";
  CHECK_THROWS_AS(parse_manifest(bad, dir.path()), InputError);
  json dup = json::array({j["cases"][0], j["cases"][0]});
  CHECK_THROWS_AS(parse_manifest(dup, dir.path()), InputError);
  CHECK(parse_manifest(json::array({j["cases"][0]}), dir.path()).size() == 1);
}

TEST_CASE("pipeline: empty stage list is a no-op") {
  testutil::TempDir dir("noop");
  PipelineConfig cfg;
  std::ostringstream log;
  const auto r = run_pipeline({}, cfg, dir / "out", log);
  CHECK(r.exit_code == 0);
  CHECK_FALSE(fs::exists(dir / "out"));
}

TEST_CASE("pipeline: missing file is an input error naming case, key and path") {
  testutil::TempDir dir("missing");
  CaseManifest c;
  c.id = "case9";
  c.gt = dir / "nope.nii.gz";
  PipelineConfig cfg;
  cfg.stages = {"eval"};
  std::ostringstream log;
  try {
    run_pipeline({c}, cfg, dir / "out", log);
    FAIL("accepted");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("case9") != std::string::npos);
    CHECK(msg.find("gt") != std::string::npos);
    CHECK(msg.find("nope.nii.gz") != std::string::npos);
  }
  json cj = {{"stages", {"fuse", "eval"}}};
  CHECK_THROWS_AS(pipeline_config_from_json(cj, dir.path()), InputError);
}

TEST_CASE("pipeline: two synthetic cases end to end, partial failure keeps completed cases") {
  testutil::TempDir dir("e2e");
  const json spec = {{"cases", 2},
                     {"raters", {{{"name", "r1"}, {"p", 0.9}, {"q", 0.99}},
                                 {{"name", "r2"}, {"p", 0.85}, {"q", 0.98}},
                                 {{"name", "r3"}, {"p", 0.95}, {"q", 0.97}}}}};
  const auto manifest = simulate_dataset({24, 24, 24}, spec, 5, dir / "data");
  auto cases = load_manifest(manifest);
  REQUIRE(cases.size() == 2);
  const auto before = slurp(cases[0].gt);

  PipelineConfig cfg;
  cfg.stages = {"fuse-staple", "eval", "report"};
  cfg.workers = 2;
  std::ostringstream log;
  auto r = run_pipeline(cases, cfg, dir / "out", log);
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "out/cases/case_000/staple.nii.gz"));
  CHECK(fs::exists(dir / "out/cases/case_001/staple.nii.gz"));
  CHECK(fs::exists(dir / "out/metrics/case_000__staple.json"));
  CHECK(fs::exists(dir / "out/metrics/case_001__staple.json"));
  CHECK(fs::exists(dir / "out/report.json"));
  CHECK(slurp(cases[0].gt) == before);  // inputs untouched
  const auto report = read_json_file(dir / "out/report.json");
  CHECK(report.at("LD").at("rows").size() == 1);

  // Corrupt one case's rater after validation would pass: truncate the file.
  {
    std::ofstream f(cases[1].predictions[0].second, std::ios::binary | std::ios::trunc);
    f << "garbage";
  }
  r = run_pipeline(cases, cfg, dir / "out2", log);
  CHECK(r.exit_code == 2);
  REQUIRE_FALSE(r.errors.empty());
  CHECK(r.errors[0].case_id == "case_001");
  CHECK(fs::exists(dir / "out2/metrics/case_000__staple.json"));
  const auto errors = read_json_file(dir / "out2/errors.json");
  CHECK(errors.at(0).at("case") == "case_001");
}

TEST_CASE("cli: help, print-config, bad input exit codes") {
  testutil::TempDir dir("cli");
  const auto log = dir / "log.txt";
  CHECK(run_cli("--help", log) == 0);
  CHECK(run_cli("--print-config", log) == 0);
  const auto cfg = json::parse(slurp(log));
  CHECK(cfg.at("metric").at("fp_hd95_penalty") == 374.0);
  CHECK(cfg.at("staple").at("max_iter") == 100);
  CHECK(cfg.at("fit").at("budget") == 400);
  CHECK(run_cli("regions --show", log) == 0);
  CHECK(slurp(log).find("WT") != std::string::npos);
  CHECK(run_cli("eval --gt nothing.nii --pred nothing.nii --out x.json", log) == 2);
  CHECK(run_cli("no-such-command", log) == 2);
}

TEST_CASE("cli: subtract, fuse, eval, report") {
  testutil::TempDir dir("cli2");
  const auto log = dir / "log.txt";
  const auto g = Geometry::make({4, 4, 4});
  write_nifti(Volume3D(g, 100.0f), dir / "t1gd.nii.gz");
  write_nifti(Volume3D(g, 40.0f), dir / "t1.nii.gz");
  const auto d = dir.path().string();
  REQUIRE(run_cli("subtract --t1gd " + d + "/t1gd.nii.gz --t1 " + d + "/t1.nii.gz --out " + d +
                      "/sub.nii.gz",
                  log) == 0);
  CHECK(read_nifti(dir / "sub.nii.gz")[5] == 60.0f);

  const auto gt = two_blob_phantom({20, 20, 20});
  write_nifti(gt.to_volume(), dir / "gt.nii.gz");
  write_nifti(simulate_label_rater(gt, {0.9, 0.99, 1}).to_volume(), dir / "a.nii.gz");
  write_nifti(simulate_label_rater(gt, {0.9, 0.99, 2}).to_volume(), dir / "b.nii.gz");
  write_nifti(simulate_label_rater(gt, {0.9, 0.99, 3}).to_volume(), dir / "c.nii.gz");
  REQUIRE(run_cli("fuse staple --inputs " + d + "/a.nii.gz " + d + "/b.nii.gz " + d +
                      "/c.nii.gz --out " + d + "/s.nii.gz --max-iter 50 --report " + d +
                      "/perf.json",
                  log) == 0);
  const auto perf = read_json_file(dir / "perf.json");
  CHECK(perf.at("labels").at("ET").at("p").size() == 3);
  CHECK(perf.at("staple_config").at("max_iter") == 50);

  write_json_file(dir / "w.json", WeightMatrix::uniform(LabelEncoding::standard().class_names(), 3));
  REQUIRE(run_cli("fuse weighted --inputs " + d + "/a.nii.gz " + d + "/b.nii.gz " + d +
                      "/c.nii.gz --weights " + d + "/w.json --out " + d + "/w.nii.gz",
                  log) == 0);
  CHECK(LabelMap::from_volume(read_nifti(dir / "w.nii.gz")).geometry() == gt.geometry());

  REQUIRE(run_cli("eval --gt " + d + "/gt.nii.gz --pred " + d + "/s.nii.gz --out " + d +
                      "/case.json --method staple",
                  log) == 0);
  REQUIRE(run_cli("eval --gt " + d + "/gt.nii.gz --pred " + d + "/w.nii.gz --out " + d +
                      "/case_w.json --method weighted",
                  log) == 0);
  CHECK(read_json_file(dir / "case.json").at("metric_config").at("connectivity") == 26);
  REQUIRE(run_cli("report --cases " + d + "/case.json " + d +
                      "/case_w.json --metric LH95 --format csv --out " + d + "/r.csv",
                  log) == 0);
  const auto csv = slurp(dir / "r.csv");
  CHECK(csv.rfind("method,ET,NETC,RC,SNFH,TC,WT\n", 0) == 0);
  CHECK(count_char(csv, '\n') == 3);
  CHECK(run_cli("report --cases " + d + "/case.json --metric XX", log) == 2);
}

TEST_CASE("cli: fit-weights on a simulated held-out set") {
  testutil::TempDir dir("cli3");
  const auto log = dir / "log.txt";
  const json spec = {{"cases", 2},
                     {"raters", {{{"name", "good"}, {"p", 0.98}, {"q", 0.999}},
                                 {{"name", "bad"}, {"p", 0.5}, {"q", 0.9}}}}};
  const auto manifest = simulate_dataset({20, 20, 20}, spec, 3, dir / "held");
  const auto d = dir.path().string();
  REQUIRE(run_cli("fit-weights --manifest " + manifest.string() + " --out " + d +
                      "/w.json --seed 1",
                  log) == 0);
  const auto w = weight_matrix_from_json(read_json_file(dir / "w.json"), LabelEncoding::standard());
  CHECK(w.model_names == std::vector<std::string>{"good", "bad"});
  CHECK_NOTHROW(w.validate());
}
