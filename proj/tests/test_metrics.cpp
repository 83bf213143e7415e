#include <doctest.h>

#include <random>
#include <set>

#include "gliofuse/lesion_metrics.hpp"
#include "gliofuse/morphology.hpp"
#include "gliofuse/surface_distance.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gliofuse;

namespace {

Mask empty_mask(const Shape3& s, const Vec3& spacing = {1, 1, 1}) {
  return Mask(Geometry::make(s, spacing), std::uint8_t{0});
}

void fill_box(Mask& m, std::array<std::size_t, 3> lo, std::array<std::size_t, 3> size) {
  for (std::size_t z = lo[2]; z < lo[2] + size[2]; ++z) {
    for (std::size_t y = lo[1]; y < lo[1] + size[1]; ++y) {
      for (std::size_t x = lo[0]; x < lo[0] + size[0]; ++x) m.at(x, y, z) = 1;
    }
  }
}

std::vector<int> as_vector(const Image<std::int32_t>& labels) {
  return std::vector<int>(labels.values().begin(), labels.values().end());
}

}  // namespace

TEST_CASE("diagonal voxels: one component at 26, two at 6") {
  Mask m = empty_mask({3, 3, 3});
  m.at(0, 0, 0) = 1;
  m.at(1, 1, 1) = 1;
  CHECK(connected_components(m, Connectivity::Vertex).count() == 1);
  CHECK(connected_components(m, Connectivity::Edge).count() == 2);
  CHECK(connected_components(m, Connectivity::Face).count() == 2);
  CHECK(connected_components(empty_mask({4, 4, 4}), Connectivity::Vertex).count() == 0);
}

TEST_CASE("components are numbered by first voxel in scan order") {
  Mask m = empty_mask({5, 1, 2});
  m.at(3, 0, 0) = 1;
  m.at(0, 0, 1) = 1;
  m.at(4, 0, 0) = 1;
  const auto cc = connected_components(m, Connectivity::Face);
  CHECK(cc.labels.at(3, 0, 0) == 1);
  CHECK(cc.labels.at(0, 0, 1) == 2);
  CHECK(cc.sizes == std::vector<std::size_t>{2, 1});
}

TEST_CASE("connectivity must be 6, 18 or 26") {
  CHECK_THROWS_AS(connectivity_from_int(8), InputError);
  CHECK(connectivity_from_int(18) == Connectivity::Edge);
  CHECK(neighbor_offsets(Connectivity::Edge).size() == 18);
}

TEST_CASE("oracle: connected components match BFS") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 40; ++t) {
    const auto m = oracle::random_mask(rng, {8, 8, 8}, 0.1 + 0.05 * (t % 6));
    for (int c : {6, 18, 26}) {
      const auto cc = connected_components(m, connectivity_from_int(c));
      const auto ref = oracle::bfs_components(m, c);
      CHECK(as_vector(cc.labels) == ref);
    }
  }
}

TEST_CASE("dilation") {
  Mask m = empty_mask({5, 5, 5});
  m.at(2, 2, 2) = 1;
  const auto d = dilate(m, 1, Connectivity::Vertex);
  CHECK(count_nonzero(d) == 27);
  CHECK(d.at(1, 1, 1) == 1);
  CHECK(d.at(0, 2, 2) == 0);
  CHECK(count_nonzero(dilate(m, 1, Connectivity::Face)) == 7);
  CHECK(dilate(m, 0, Connectivity::Vertex) == m);
}

TEST_CASE("oracle: dilation matches an iterated max filter") {
  std::mt19937_64 rng(22);
  for (int t = 0; t < 30; ++t) {
    const auto m = oracle::random_mask(rng, {8, 8, 8}, 0.03);
    for (int c : {6, 18, 26}) {
      for (int it : {1, 2, 3}) {
        Mask ref = m;
        for (int k = 0; k < it; ++k) ref = oracle::max_filter(ref, c);
        CHECK(dilate(m, it, connectivity_from_int(c)) == ref);
      }
    }
  }
}

TEST_CASE("surface voxels") {
  Mask cube = empty_mask({5, 5, 5});
  fill_box(cube, {1, 1, 1}, {3, 3, 3});
  CHECK(surface_voxel_indices(cube).size() == 26);
  Mask one = empty_mask({3, 3, 3});
  one.at(1, 1, 1) = 1;
  CHECK(surface_voxel_indices(one) == std::vector<std::size_t>{one.geometry().index(1, 1, 1)});
  CHECK(surface_voxels(empty_mask({3, 3, 3})).empty());
  Mask full(Geometry::make({3, 3, 3}, {2, 1, 1}), std::uint8_t{1});
  CHECK(surface_voxel_indices(full).size() == 26);
  const auto pts = surface_voxels(full);
  CHECK(pts.back()[0] == 4.0);
}

TEST_CASE("hd95 examples") {
  Mask a = empty_mask({6, 2, 2});
  Mask b = empty_mask({6, 2, 2});
  a.at(0, 0, 0) = 1;
  b.at(3, 0, 0) = 1;
  CHECK(hd95(a, b) == 3.0);
  CHECK(hd95(a, a) == 0.0);
  CHECK_THROWS_AS(hd95(a, empty_mask({6, 2, 2})), InputError);
  CHECK_THROWS_AS(hd95(a, empty_mask({6, 2, 3})), GeometryError);
}

TEST_CASE("percentile uses linear interpolation") {
  CHECK(percentile_linear({0, 10}, 95) == doctest::Approx(9.5));
  CHECK(percentile_linear({4}, 95) == 4.0);
  CHECK(percentile_linear({3, 1, 2}, 50) == 2.0);
}

TEST_CASE("oracle: hd95 matches all-pairs brute force, anisotropic too") {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 60; ++t) {
    std::uniform_int_distribution<int> side(1, 10);
    const Shape3 s{static_cast<std::size_t>(side(rng)), static_cast<std::size_t>(side(rng)),
                   static_cast<std::size_t>(side(rng))};
    const Vec3 sp = (t % 2) ? Vec3{1, 1, 1} : Vec3{0.7, 1.3, 2.5};
    auto a = oracle::random_mask(rng, s, 0.2, sp);
    auto b = oracle::random_mask(rng, s, 0.2, sp);
    a[0] = 1;
    b[b.size() - 1] = 1;
    const double h = hd95(a, b);
    CHECK(std::abs(h - oracle::hd95(a, b)) < 1e-9);
    CHECK(h == hd95(b, a));
  }
}

TEST_CASE("oracle: dice matches voxel counting") {
  std::mt19937_64 rng(24);
  for (int t = 0; t < 50; ++t) {
    const auto a = oracle::random_mask(rng, {6, 6, 6}, 0.3);
    const auto b = oracle::random_mask(rng, {6, 6, 6}, 0.3);
    CHECK(dice(a, b) == oracle::dice(a, b));
  }
  CHECK(dice(empty_mask({2, 2, 2}), empty_mask({2, 2, 2})) == 1.0);
}

TEST_CASE("lesion-wise: identical, missing, empty") {
  MetricConfig cfg;
  cfg.min_lesion_voxels = 0;
  Mask gt = empty_mask({12, 12, 12});
  fill_box(gt, {2, 2, 2}, {4, 4, 4});
  auto s = lesionwise_scores(gt, gt, cfg);
  CHECK(s.ld == 1.0);
  CHECK(s.lh95 == 0.0);
  REQUIRE(s.lesions.size() == 1);
  CHECK(s.lesions[0].gt_volume_voxels == 64);

  s = lesionwise_scores(gt, empty_mask({12, 12, 12}), cfg);
  CHECK(s.ld == 0.0);
  CHECK(s.lh95 == cfg.fp_hd95_penalty);

  s = lesionwise_scores(empty_mask({12, 12, 12}), empty_mask({12, 12, 12}), MetricConfig{});
  CHECK(s.ld == 1.0);
  CHECK(s.lh95 == 0.0);

  s = lesionwise_scores(empty_mask({12, 12, 12}), gt, cfg);
  CHECK(s.fp_count == 1);
  CHECK(s.ld == 0.0);
  CHECK(s.lh95 == cfg.fp_hd95_penalty);
}

TEST_CASE("lesion-wise: shifted cube plus far false positive") {
  MetricConfig cfg;
  cfg.min_lesion_voxels = 0;
  Mask gt = empty_mask({20, 20, 20});
  Mask pred = empty_mask({20, 20, 20});
  fill_box(gt, {2, 2, 2}, {4, 4, 4});
  fill_box(pred, {3, 2, 2}, {4, 4, 4});
  fill_box(pred, {14, 14, 14}, {4, 4, 4});
  const auto s = lesionwise_scores(gt, pred, cfg);
  CHECK(s.fp_count == 1);
  REQUIRE(s.lesions.size() == 1);
  CHECK(s.lesions[0].dice == 0.75);
  CHECK(s.ld == 0.375);
  CHECK(s.lh95 == doctest::Approx((s.lesions[0].hd95 + 374.0) / 2));
}

TEST_CASE("lesion-wise: small GT lesions are dropped, small unmatched preds ignored") {
  MetricConfig cfg;
  cfg.min_lesion_voxels = 10;
  Mask gt = empty_mask({16, 16, 16});
  fill_box(gt, {1, 1, 1}, {2, 2, 2});  // 8 voxels, below the minimum
  Mask pred = empty_mask({16, 16, 16});
  fill_box(pred, {12, 12, 12}, {2, 2, 1});  // 4 voxels, unmatched
  const auto s = lesionwise_scores(gt, pred, cfg);
  CHECK(s.lesions.empty());
  CHECK(s.fp_count == 0);
  CHECK(s.ld == 1.0);
  CHECK(s.lh95 == 0.0);
}

TEST_CASE("lesion-wise: one pred component touching two lesions counts for both") {
  MetricConfig cfg;
  cfg.min_lesion_voxels = 0;
  cfg.dilation_iterations = 0;
  Mask gt = empty_mask({12, 4, 4});
  fill_box(gt, {0, 0, 0}, {2, 2, 2});
  fill_box(gt, {6, 0, 0}, {2, 2, 2});
  Mask pred = empty_mask({12, 4, 4});
  fill_box(pred, {0, 0, 0}, {8, 1, 1});
  const auto s = lesionwise_scores(gt, pred, cfg);
  REQUIRE(s.lesions.size() == 2);
  CHECK(s.lesions[0].pred_component_ids == std::vector<int>{1});
  CHECK(s.lesions[1].pred_component_ids == std::vector<int>{1});
  CHECK(s.fp_count == 0);
}

TEST_CASE("lesion-wise: dilation merges nearby GT pieces into one lesion") {
  MetricConfig cfg;
  cfg.min_lesion_voxels = 0;
  Mask gt = empty_mask({14, 4, 4});
  fill_box(gt, {0, 0, 0}, {2, 2, 2});
  fill_box(gt, {5, 0, 0}, {2, 2, 2});
  CHECK(lesionwise_scores(gt, gt, cfg).lesions.size() == 1);
  cfg.dilation_iterations = 0;
  CHECK(lesionwise_scores(gt, gt, cfg).lesions.size() == 2);
}

TEST_CASE("property: single intersecting lesion reduces to plain dice and hd95") {
  std::mt19937_64 rng(31);
  MetricConfig cfg;
  cfg.min_lesion_voxels = 0;
  for (int t = 0; t < 20; ++t) {
    std::uniform_int_distribution<std::size_t> pos(1, 6), len(2, 5);
    Mask gt = empty_mask({14, 14, 14});
    Mask pred = empty_mask({14, 14, 14});
    const std::array<std::size_t, 3> lo{pos(rng), pos(rng), pos(rng)};
    fill_box(gt, lo, {len(rng), len(rng), len(rng)});
    fill_box(pred, {lo[0] + 1, lo[1], lo[2]}, {len(rng), len(rng), len(rng)});
    const auto s = lesionwise_scores(gt, pred, cfg);
    CHECK(s.ld == doctest::Approx(oracle::dice(gt, pred)).epsilon(1e-12));
    CHECK(s.lh95 == doctest::Approx(oracle::hd95(gt, pred)).epsilon(1e-12));
  }
}

TEST_CASE("property: far false positive never raises LD nor lowers LH95") {
  std::mt19937_64 rng(32);
  MetricConfig cfg;
  cfg.min_lesion_voxels = 8;
  for (int t = 0; t < 20; ++t) {
    Mask gt = oracle::random_mask(rng, {16, 16, 16}, 0.0);
    Mask pred = gt;
    fill_box(gt, {1, 1, 1}, {4, 3, 3});
    fill_box(pred, {1 + t % 2, 1, 1}, {4, 3, 3});
    const auto before = lesionwise_scores(gt, pred, cfg);
    fill_box(pred, {12, 12, 12}, {3, 3, 3});
    const auto after = lesionwise_scores(gt, pred, cfg);
    CHECK(after.ld <= before.ld);
    CHECK(after.lh95 >= before.lh95);
    CHECK(after.fp_count == before.fp_count + 1);
  }
}

TEST_CASE("property: scores stay in range on random masks") {
  std::mt19937_64 rng(33);
  MetricConfig cfg;
  cfg.min_lesion_voxels = 3;
  cfg.fp_hd95_penalty = 7.0;  // small so that real hd95 can exceed it
  for (int t = 0; t < 30; ++t) {
    const auto gt = oracle::random_mask(rng, {10, 10, 10}, 0.05);
    const auto pred = oracle::random_mask(rng, {10, 10, 10}, 0.05);
    const auto s = lesionwise_scores(gt, pred, cfg);
    CHECK(s.ld >= 0.0);
    CHECK(s.ld <= 1.0);
    CHECK(s.lh95 >= 0.0);
    CHECK(s.lh95 <= cfg.fp_hd95_penalty);
    for (const auto& l : s.lesions) {
      CHECK(l.dice >= 0.0);
      CHECK(l.dice <= 1.0);
      CHECK(l.hd95 >= 0.0);
    }
  }
}

TEST_CASE("property: no dilation and no minimum reduces to component intersection") {
  std::mt19937_64 rng(34);
  MetricConfig cfg;
  cfg.min_lesion_voxels = 0;
  cfg.dilation_iterations = 0;
  for (int t = 0; t < 20; ++t) {
    const auto gt = oracle::random_mask(rng, {8, 8, 8}, 0.04);
    const auto pred = oracle::random_mask(rng, {8, 8, 8}, 0.04);
    const auto s = lesionwise_scores(gt, pred, cfg);
    const auto gl = oracle::bfs_components(gt, 26);
    const auto pl = oracle::bfs_components(pred, 26);
    int lesions = 0;
    for (int v : gl) lesions = std::max(lesions, v);
    REQUIRE(static_cast<int>(s.lesions.size()) == lesions);
    for (int l = 1; l <= lesions; ++l) {
      std::set<int> touching;
      for (std::size_t i = 0; i < gl.size(); ++i) {
        if (gl[i] == l && pl[i]) touching.insert(pl[i]);
      }
      const auto& ids = s.lesions[l - 1].pred_component_ids;
      CHECK(std::set<int>(ids.begin(), ids.end()) == touching);
    }
  }
}

TEST_CASE("evaluate_case covers every report region") {
  std::mt19937_64 rng(35);
  auto lm = testutil::random_labelmap(rng, {6, 6, 6});
  const auto m = evaluate_case(lm, lm, MetricConfig{}, RegionDefinitions{}, "c1");
  CHECK(m.case_id == "c1");
  CHECK(m.regions.size() == 6);
  for (const auto& r : kReportRegions) {
    CHECK(m.regions.at(r).ld == 1.0);
    CHECK(m.regions.at(r).lh95 == 0.0);
  }
  Image<std::uint8_t> bg(Geometry::make({6, 6, 6}), std::uint8_t{0});
  const auto e = evaluate_case(LabelMap(bg), LabelMap(bg), MetricConfig{});
  CHECK(e.regions.at("RC").ld == 1.0);
}

TEST_CASE("metric config validation") {
  MetricConfig c;
  c.connectivity = 4;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = MetricConfig{};
  c.dilation_iterations = -1;
  CHECK_THROWS_AS(c.validate(), InputError);
}
