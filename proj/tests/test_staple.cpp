#include <doctest.h>

#include <algorithm>
#include <random>

#include "gliofuse/lesion_metrics.hpp"
#include "gliofuse/random.hpp"
#include "gliofuse/staple.hpp"
#include "gliofuse/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gliofuse;

namespace {

std::vector<Mask> random_raters(std::mt19937_64& rng, const Shape3& shape, std::size_t n) {
  // A blobby truth plus independent noise, so the instance is not trivial.
  Mask truth(Geometry::make(shape), std::uint8_t{0});
  std::uniform_real_distribution<double> u(0, 1);
  const double cx = shape[0] * u(rng), cy = shape[1] * u(rng), cz = shape[2] * u(rng);
  const double r = 1.0 + 0.3 * std::min({shape[0], shape[1], shape[2]}) * u(rng);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto c = truth.geometry().coords(i);
    const double d2 = (c[0] - cx) * (c[0] - cx) + (c[1] - cy) * (c[1] - cy) + (c[2] - cz) * (c[2] - cz);
    truth[i] = d2 <= r * r ? 1 : 0;
  }
  std::vector<Mask> out;
  for (std::size_t j = 0; j < n; ++j) {
    out.push_back(simulate_rater(truth, {0.6 + 0.39 * u(rng), 0.9 + 0.099 * u(rng), rng()}));
  }
  return out;
}

}  // namespace

TEST_CASE("first E-step matches the hand-evaluated posterior") {
  const auto g = Geometry::make({1, 1, 1});
  std::vector<Mask> raters(3, Mask(g, std::uint8_t{1}));
  StapleConfig cfg;
  cfg.max_iter = 1;
  cfg.prior_mode = PriorMode::Fixed;
  cfg.fixed_prior = 0.5;
  cfg.init_p = 0.9;
  cfg.init_q = 0.9;
  const auto r = staple_binary(raters, cfg);
  const double expected = 0.9 * 0.9 * 0.9 * 0.5 / (0.9 * 0.9 * 0.9 * 0.5 + 0.1 * 0.1 * 0.1 * 0.5);
  CHECK(r.posterior[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(r.posterior[0] == doctest::Approx(0.99863).epsilon(1e-5));
  CHECK(r.performance.iterations == 1);
}

TEST_CASE("unanimous raters: consensus is the shared mask, p and q near 1") {
  std::mt19937_64 rng(41);
  const auto m = oracle::random_mask(rng, {10, 10, 10}, 0.3);
  std::vector<Mask> raters(4, m);
  const auto r = staple_binary(raters, StapleConfig{});
  CHECK(threshold_posterior(r.posterior, 0.5) == m);
  for (std::size_t j = 0; j < raters.size(); ++j) {
    CHECK(r.performance.p[j] > 1 - 1e-3);
    CHECK(r.performance.q[j] > 1 - 1e-3);
  }
  raters.push_back(m);
  const auto dup = staple_binary(raters, StapleConfig{});
  CHECK(threshold_posterior(dup.posterior, 0.5) == m);
}

TEST_CASE("staple errors and degenerate inputs") {
  CHECK_THROWS_AS(staple_binary(std::vector<Mask>{}, StapleConfig{}), InputError);
  const auto g = Geometry::make({3, 3, 3});
  std::vector<Mask> empty(2, Mask(g, std::uint8_t{0}));
  const auto r = staple_binary(empty, StapleConfig{});
  CHECK(r.performance.converged);
  CHECK(r.performance.iterations >= 1);
  for (double w : r.posterior.values()) CHECK(w == 0.0);

  std::vector<Mask> bad = {Mask(g, std::uint8_t{2})};
  CHECK_THROWS_AS(staple_binary(bad, StapleConfig{}), InputError);
  std::vector<Mask> mismatch = {Mask(g, std::uint8_t{0}), Mask(Geometry::make({3, 3, 2}), std::uint8_t{0})};
  CHECK_THROWS_AS(staple_binary(mismatch, StapleConfig{}), GeometryError);

  StapleConfig c;
  c.max_iter = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = StapleConfig{};
  c.tol = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = StapleConfig{};
  c.threshold = 1.0;
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("all-foreground raters do not divide by zero") {
  const auto g = Geometry::make({2, 2, 2});
  std::vector<Mask> full(3, Mask(g, std::uint8_t{1}));
  StapleConfig cfg;
  cfg.prior_mode = PriorMode::Fixed;
  cfg.fixed_prior = 0.5;
  const auto r = staple_binary(full, cfg);
  for (double w : r.posterior.values()) CHECK(w > 0.5);
  for (double p : r.performance.p) CHECK(p > 0.0);
  for (double q : r.performance.q) {
    CHECK(q > 0.0);
    CHECK(q <= 1.0);
  }
}

TEST_CASE("property: posterior in [0,1] and log-likelihood monotone") {
  std::mt19937_64 rng(42);
  for (int t = 0; t < 10; ++t) {
    const auto raters = random_raters(rng, {12, 11, 10}, 3 + t % 3);
    for (auto mode : {PriorMode::GlobalPrevalence, PriorMode::Estimated}) {
      StapleConfig cfg;
      cfg.prior_mode = mode;
      const auto r = staple_binary(raters, cfg);
      for (double w : r.posterior.values()) {
        CHECK(w >= 0.0);
        CHECK(w <= 1.0);
      }
      for (std::size_t k = 1; k < r.log_likelihood.size(); ++k) {
        CHECK(r.log_likelihood[k] >= r.log_likelihood[k - 1] - 1e-9);
      }
      for (std::size_t j = 0; j < raters.size(); ++j) {
        CHECK(r.performance.p[j] > 0.0);
        CHECK(r.performance.p[j] <= 1.0);
        CHECK(r.performance.q[j] > 0.0);
        CHECK(r.performance.q[j] <= 1.0);
      }
    }
  }
}

TEST_CASE("property: bounding-box restriction equals the full computation") {
  std::mt19937_64 rng(43);
  for (int t = 0; t < 6; ++t) {
    const auto raters = random_raters(rng, {14, 12, 10}, 4);
    for (auto mode : {PriorMode::GlobalPrevalence, PriorMode::Estimated}) {
      StapleConfig a;
      a.prior_mode = mode;
      a.roi_mode = RoiMode::AllVoxels;
      StapleConfig b = a;
      b.roi_mode = RoiMode::UnionBoundingBox;
      const auto ra = staple_binary(raters, a);
      const auto rb = staple_binary(raters, b);
      double worst = 0;
      for (std::size_t i = 0; i < ra.posterior.size(); ++i) {
        worst = std::max(worst, std::abs(ra.posterior[i] - rb.posterior[i]));
      }
      CHECK(worst < 1e-9);
      CHECK(ra.performance.iterations == rb.performance.iterations);
    }
  }
}

TEST_CASE("property: rater permutation permutes performance and keeps W") {
  std::mt19937_64 rng(44);
  auto raters = random_raters(rng, {10, 10, 10}, 4);
  const auto base = staple_binary(raters, StapleConfig{});
  std::vector<std::size_t> perm = {2, 0, 3, 1};
  std::vector<Mask> permuted;
  for (auto k : perm) permuted.push_back(raters[k]);
  const auto r = staple_binary(permuted, StapleConfig{});
  for (std::size_t i = 0; i < r.posterior.size(); ++i) {
    CHECK(std::abs(r.posterior[i] - base.posterior[i]) <= 1e-12);
  }
  for (std::size_t k = 0; k < perm.size(); ++k) {
    CHECK(std::abs(r.performance.p[k] - base.performance.p[perm[k]]) <= 1e-12);
    CHECK(std::abs(r.performance.q[k] - base.performance.q[perm[k]]) <= 1e-12);
  }
}

TEST_CASE("determinism: same input, same output") {
  std::mt19937_64 rng(45);
  const auto raters = random_raters(rng, {9, 9, 9}, 3);
  const auto a = staple_binary(raters, StapleConfig{});
  const auto b = staple_binary(raters, StapleConfig{});
  CHECK(a.posterior == b.posterior);
  CHECK(a.performance.p == b.performance.p);
}

TEST_CASE("parameter recovery on the two-blob phantom") {
  const auto phantom = two_blob_phantom({64, 64, 64});
  Mask truth(phantom.geometry(), std::uint8_t{0});
  for (std::size_t i = 0; i < phantom.size(); ++i) truth[i] = phantom[i] != 0;
  Rng rng(20241016);
  std::vector<Mask> raters;
  std::vector<double> ps, qs;
  for (std::uint64_t j = 0; j < 5; ++j) {
    ps.push_back(0.80 + 0.19 * uniform01(rng));
    qs.push_back(0.80 + 0.19 * uniform01(rng));
    raters.push_back(simulate_rater(truth, {ps.back(), qs.back(), split_seed(7, j)}));
  }
  StapleConfig cfg;
  cfg.prior_mode = PriorMode::Estimated;
  const auto r = staple_binary(raters, cfg);
  for (std::size_t j = 0; j < 5; ++j) {
    CHECK(std::abs(r.performance.p[j] - ps[j]) <= 0.02);
    CHECK(std::abs(r.performance.q[j] - qs[j]) <= 0.02);
  }
  double best = 0;
  for (const auto& m : raters) best = std::max(best, oracle::dice(m, truth));
  CHECK(oracle::dice(threshold_posterior(r.posterior, cfg.threshold), truth) >= best);
}

TEST_CASE("multi-label: unanimous raters reproduce the map") {
  std::mt19937_64 rng(46);
  const auto lm = testutil::random_labelmap(rng, {8, 8, 8});
  std::vector<LabelMap> raters(3, lm);
  const auto r = staple_multilabel(raters, StapleConfig{});
  CHECK(r.consensus == lm);
  CHECK(r.performance.size() == 4);
  CHECK(r.performance.count("ET") == 1);
}

TEST_CASE("consensus rule: highest posterior above threshold, ties to lowest code") {
  const auto g = Geometry::make({4, 1, 1});
  const auto enc = LabelEncoding::standard();  // entries NETC=1, SNFH=2, ET=3, RC=4
  std::vector<Image<double>> post = {
      Image<double>(g, std::vector<double>{0.8, 0.3, 0.7, 0.1}),  // NETC
      Image<double>(g, std::vector<double>{0.9, 0.2, 0.7, 0.1}),  // SNFH
      Image<double>(g, std::vector<double>{0.0, 0.4, 0.0, 0.5}),  // ET
      Image<double>(g, std::vector<double>{0.0, 0.0, 0.0, 0.0}),  // RC
  };
  const auto lm = assign_consensus(post, enc, 0.5);
  CHECK(lm[0] == 2);  // 0.9 beats 0.8
  CHECK(lm[1] == 0);  // nothing above threshold
  CHECK(lm[2] == 1);  // tie goes to the lower code
  CHECK(lm[3] == 0);  // exactly at threshold is not above it
}

TEST_CASE("multi-label: votes resolve per voxel") {
  const auto g = Geometry::make({4, 1, 1});
  // Rater codes per voxel: voxel 0 unanimous ET; voxel 1 split ET/NETC/bg;
  // voxel 2 unanimous background; voxel 3 two NETC votes, one ET vote.
  std::vector<LabelMap> raters = {
      LabelMap(Image<std::uint8_t>(g, std::vector<std::uint8_t>{3, 3, 0, 1})),
      LabelMap(Image<std::uint8_t>(g, std::vector<std::uint8_t>{3, 1, 0, 1})),
      LabelMap(Image<std::uint8_t>(g, std::vector<std::uint8_t>{3, 0, 0, 3})),
  };
  StapleConfig cfg;
  cfg.prior_mode = PriorMode::Fixed;
  cfg.fixed_prior = 0.5;
  cfg.init_p = cfg.init_q = 0.8;
  cfg.max_iter = 1;
  const auto r = staple_multilabel(raters, cfg);
  CHECK(r.consensus[0] == 3);
  CHECK(r.consensus[1] == 0);
  CHECK(r.consensus[2] == 0);
  CHECK(r.consensus[3] == 1);
}

TEST_CASE("multi-label: mismatched encodings are rejected") {
  const auto g = Geometry::make({1, 1, 1});
  LabelEncoding other({{1, "A"}});
  std::vector<LabelMap> raters = {LabelMap(Image<std::uint8_t>(g, std::uint8_t{0})),
                                  LabelMap(Image<std::uint8_t>(g, std::uint8_t{0}), other)};
  CHECK_THROWS_AS(staple_multilabel(raters, StapleConfig{}), InputError);
}
