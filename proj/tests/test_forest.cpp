// SPDX-License-Identifier: MIT
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "cart/forest.hpp"
#include "cart/stats.hpp"

using namespace cart;

namespace {

Dataset random_dataset(Rng& rng, int d, std::int64_t n) {
  Dataset data;
  data.d = d;
  data.n = n;
  data.x = BitMatrix(n, d);
  for (std::int64_t i = 0; i < n; ++i) {
    for (int c = 0; c < d; ++c)
      data.x.set(i, c, rng.next_bernoulli(0.5) ? 1 : 0);
    data.y.push_back(rng.next_double() - 0.5);
  }
  return data;
}

std::filesystem::path fresh_dir(const char* name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("forest prediction is the mean of its tree predictions") {
  Rng rng(SeedSpec{90}, "forest-data");
  const Dataset data = random_dataset(rng, 5, 128);
  ForestConfig cfg;
  cfg.B = 50;
  cfg.s = 32;
  cfg.seed = SeedSpec{91};
  const Forest forest = fit_forest(data, cfg);
  REQUIRE(forest.trees.size() == 50);
  REQUIRE(forest.members.size() == 50);

  BitMatrix q(1, 5);
  for (int rep = 0; rep < 10; ++rep) {
    for (int c = 0; c < 5; ++c)
      q.set(0, c, rng.next_bernoulli(0.5) ? 1 : 0);
    const auto preds = forest.tree_predictions(q, 0);
    REQUIRE(preds.size() == 50);
    double sum = 0.0;
    for (double p : preds) sum += p;
    CHECK(forest.predict(q, 0) == sum / 50.0);
  }
}

TEST_CASE("subsampling draws uniform distinct rows") {
  Rng rng(SeedSpec{92}, "forest-data");
  const Dataset data = random_dataset(rng, 3, 64);
  ForestConfig cfg;
  cfg.B = 10000;
  cfg.s = 8;
  cfg.seed = SeedSpec{93};
  const Forest forest = fit_forest(data, cfg);

  std::vector<std::int64_t> hits(64, 0);
  for (const auto& rows : forest.members) {
    REQUIRE(rows.size() == 8);
    std::set<std::int64_t> seen(rows.begin(), rows.end());
    CHECK(seen.size() == 8);
    for (std::int64_t i : rows) {
      REQUIRE(i >= 0);
      REQUIRE(i < 64);
      ++hits[static_cast<std::size_t>(i)];
    }
  }
  // Inclusion is Bernoulli(s/n) per tree: mean 1250, sd ~ 33.
  for (std::int64_t h : hits) {
    CHECK(h > 1250 - 5 * 34);
    CHECK(h < 1250 + 5 * 34);
  }
}

TEST_CASE("fitting is deterministic and thread-count invariant") {
  Rng rng(SeedSpec{94}, "forest-data");
  const Dataset data = random_dataset(rng, 6, 200);
  ForestConfig cfg;
  cfg.B = 40;
  cfg.s = 50;
  cfg.seed = SeedSpec{95};
  cfg.threads = 1;
  const Forest a = fit_forest(data, cfg);
  cfg.threads = 4;
  const Forest b = fit_forest(data, cfg);
  REQUIRE(a.trees.size() == b.trees.size());
  CHECK(a.members == b.members);
  for (std::size_t k = 0; k < a.trees.size(); ++k)
    CHECK(a.trees[k].to_json() == b.trees[k].to_json());
}

TEST_CASE("variance estimate is zero for a constant-response forest") {
  Rng rng(SeedSpec{96}, "forest-data");
  Dataset data = random_dataset(rng, 4, 100);
  for (double& v : data.y) v = 0.25;
  ForestConfig cfg;
  cfg.B = 30;
  cfg.s = 20;
  cfg.seed = SeedSpec{97};
  const Forest forest = fit_forest(data, cfg);
  BitMatrix q(1, 4);
  CHECK(forest.ij_variance(q, 0) == 0.0);
  const auto [lo, hi] = forest.confidence_interval(q, 0, 0.95);
  CHECK(lo == doctest::Approx(0.25));
  CHECK(hi == doctest::Approx(0.25));
}

TEST_CASE("variance estimate stays near the floor under a broken linkage") {
  // Shuffling the membership ledger after the fit destroys any real
  // covariance between inclusion and prediction; the debiased estimate must
  // then sit near the forest's own Monte Carlo floor tree_var/B rather than
  // at the raw estimator's noise level s(1-s/n)·tree_var/B.
  Rng rng(SeedSpec{98}, "forest-data");
  const Dataset data = random_dataset(rng, 5, 256);
  ForestConfig cfg;
  cfg.B = 4000;
  cfg.s = 16;
  cfg.seed = SeedSpec{99};
  Forest forest = fit_forest(data, cfg);

  Rng shuffler(SeedSpec{100}, "shuffle");
  shuffler.shuffle(forest.members);

  BitMatrix q(1, 5);
  const auto preds = forest.tree_predictions(q, 0);
  double mean = 0.0, sq = 0.0;
  for (double p : preds) {
    mean += p;
    sq += p * p;
  }
  mean /= static_cast<double>(cfg.B);
  const double tree_var = sq / static_cast<double>(cfg.B) - mean * mean;
  REQUIRE(tree_var > 0.0);

  const double est = forest.ij_variance(q, 0);
  CHECK(est < 10.0 * tree_var / static_cast<double>(cfg.B));
  CHECK(est >= tree_var / static_cast<double>(cfg.B));
}

TEST_CASE("confidence intervals widen with the level") {
  Rng rng(SeedSpec{101}, "forest-data");
  Dataset data = random_dataset(rng, 4, 200);
  for (std::int64_t i = 0; i < data.n; ++i)
    data.y[static_cast<std::size_t>(i)] =
        (data.x.get(i, 0) ? 0.4 : -0.4) + 0.1 * (rng.next_double() - 0.5);
  ForestConfig cfg;
  cfg.B = 200;
  cfg.s = 32;
  cfg.seed = SeedSpec{102};
  const Forest forest = fit_forest(data, cfg);
  BitMatrix q(1, 4);
  q.set(0, 0, 1);

  const double pred = forest.predict(q, 0);
  const auto [lo90, hi90] = forest.confidence_interval(q, 0, 0.90);
  const auto [lo99, hi99] = forest.confidence_interval(q, 0, 0.99);
  CHECK(lo99 < lo90);
  CHECK(hi99 > hi90);
  CHECK(lo90 < pred);
  CHECK(hi90 > pred);
  CHECK(hi90 - pred == doctest::Approx(pred - lo90));

  CHECK_THROWS_AS(forest.confidence_interval(q, 0, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(forest.confidence_interval(q, 0, 1.0),
                  std::invalid_argument);
}

TEST_CASE("forest configuration errors") {
  Rng rng(SeedSpec{103}, "forest-data");
  const Dataset data = random_dataset(rng, 3, 20);
  ForestConfig cfg;
  cfg.B = 0;
  cfg.s = 4;
  CHECK_THROWS_AS(fit_forest(data, cfg), std::invalid_argument);
  cfg.B = 2;
  cfg.s = 21;
  CHECK_THROWS_AS(fit_forest(data, cfg), std::invalid_argument);
  cfg.s = 1;  // honest trees need two points per subsample
  CHECK_THROWS_AS(fit_forest(data, cfg), std::invalid_argument);
  cfg.s = 4;
  cfg.threads = 0;
  CHECK_THROWS_AS(fit_forest(data, cfg), std::invalid_argument);
  cfg.threads = 1;
  CHECK_NOTHROW(fit_forest(data, cfg));

  cfg.B = 1;
  const Forest tiny = fit_forest(data, cfg);
  BitMatrix q(1, 3);
  CHECK_THROWS_AS(tiny.ij_variance(q, 0), std::invalid_argument);
}

TEST_CASE("forest save and load round trip") {
  Rng rng(SeedSpec{104}, "forest-data");
  const Dataset data = random_dataset(rng, 4, 30);
  ForestConfig cfg;
  cfg.B = 5;
  cfg.s = 6;
  cfg.seed = SeedSpec{105};
  cfg.tree.variant = TreeVariant::LevelSplit;
  cfg.tree.budget = 2;
  cfg.tree.fully_grown = false;
  const Forest forest = fit_forest(data, cfg);

  const auto dir = fresh_dir("cart_forest_roundtrip");
  forest.save(dir.string());
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  CHECK(std::filesystem::exists(dir / "tree_00000.json"));
  CHECK(std::filesystem::exists(dir / "tree_00004.json"));
  CHECK(std::filesystem::exists(dir / "ledger.csv"));

  // Ledger: B rows of n 0/1 flags whose row sums equal s and whose set
  // matches the manifest membership.
  std::ifstream ledger(dir / "ledger.csv");
  std::string line;
  std::int64_t rows = 0;
  while (std::getline(ledger, line)) {
    std::set<std::int64_t> from_ledger;
    std::int64_t col = 0, sum = 0;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      REQUIRE((tok == "0" || tok == "1"));
      if (tok == "1") {
        from_ledger.insert(col);
        ++sum;
      }
      ++col;
    }
    CHECK(col == 30);
    CHECK(sum == 6);
    const auto& mem = forest.members[static_cast<std::size_t>(rows)];
    CHECK(from_ledger == std::set<std::int64_t>(mem.begin(), mem.end()));
    ++rows;
  }
  CHECK(rows == 5);

  const Forest back = Forest::load(dir.string());
  CHECK(back.config.B == 5);
  CHECK(back.config.s == 6);
  CHECK(back.config.seed.master_seed == 105);
  CHECK(back.config.tree.variant == TreeVariant::LevelSplit);
  CHECK(back.config.tree.budget == 2);
  CHECK(back.n == 30);
  CHECK(back.d == 4);
  CHECK(back.members == forest.members);
  for (std::size_t b = 0; b < 5; ++b)
    CHECK(back.trees[b].to_json() == forest.trees[b].to_json());

  BitMatrix q(1, 4);
  for (int rep = 0; rep < 8; ++rep) {
    for (int c = 0; c < 4; ++c)
      q.set(0, c, rng.next_bernoulli(0.5) ? 1 : 0);
    CHECK(back.predict(q, 0) == forest.predict(q, 0));
    CHECK(back.ij_variance(q, 0) == forest.ij_variance(q, 0));
  }

  CHECK_THROWS_AS(Forest::load((dir / "missing").string()),
                  std::invalid_argument);
  std::filesystem::remove_all(dir);
}

TEST_CASE("expected partition diameter") {
  const auto uni = FeatureDistribution::product(8, 0.5);
  SparseTarget constant;
  constant.d = 8;
  constant.table = {0.3};
  BuildConfig tree_cfg;
  tree_cfg.fully_grown = true;
  const auto zero = expected_partition_diameter(
      uni, constant, NoiseModel{}, 64, 5, tree_cfg, SeedSpec{106});
  CHECK(zero.mean == doctest::Approx(0.0));

  SparseTarget one;
  one.d = 8;
  one.relevant = {0};
  one.table = {-0.5, 0.5};
  const NoiseModel noise{NoiseModel::Kind::Uniform, 0.1};
  const auto coarse = expected_partition_diameter(
      uni, one, noise, 64, 20, tree_cfg, SeedSpec{107});
  const auto fine = expected_partition_diameter(
      uni, one, noise, 1024, 20, tree_cfg, SeedSpec{108});
  CHECK(fine.mean < 0.05);
  CHECK(coarse.mean + 2.0 * (coarse.stderr_mean + fine.stderr_mean) >=
        fine.mean);

  CHECK_THROWS_AS(expected_partition_diameter(uni, one, noise, 64, 0,
                                              tree_cfg, SeedSpec{1}),
                  std::invalid_argument);
}

TEST_CASE("normal quantile") {
  CHECK(normal_quantile(0.975) ==
        doctest::Approx(1.959963984540054).epsilon(1e-9));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
  for (double p : {0.001, 0.01, 0.1, 0.3, 0.7, 0.9, 0.99, 0.999}) {
    const double z = normal_quantile(p);
    CHECK(0.5 * std::erfc(-z / std::sqrt(2.0)) ==
          doctest::Approx(p).epsilon(1e-10));
    CHECK(normal_quantile(1.0 - p) == doctest::Approx(-z).epsilon(1e-9));
  }
  CHECK_THROWS_AS(normal_quantile(0.0), std::invalid_argument);
  CHECK_THROWS_AS(normal_quantile(1.0), std::invalid_argument);
}

TEST_CASE("ols fit") {
  const OlsFit fit = ols_fit({1.0, 2.0, 4.0}, {1.0, -1.0, -5.0});
  CHECK(fit.slope == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(fit.intercept == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(fit.slope_stderr == doctest::Approx(0.0));

  const OlsFit two = ols_fit({0.0, 1.0}, {5.0, 7.0});
  CHECK(two.slope == doctest::Approx(2.0));
  CHECK(std::isnan(two.slope_stderr));

  CHECK_THROWS_AS(ols_fit({1.0}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(ols_fit({2.0, 2.0}, {1.0, 3.0}), std::invalid_argument);
  CHECK_THROWS_AS(ols_fit({1.0, 2.0}, {1.0}), std::invalid_argument);
}

TEST_CASE("moment summary") {
  const MomentSummary s = moments({1.0, 2.0, 3.0, 4.0});
  CHECK(s.mean == doctest::Approx(2.5));
  CHECK(s.variance == doctest::Approx(1.25));
  CHECK(s.skewness == doctest::Approx(0.0));
  CHECK(s.excess_kurtosis == doctest::Approx(2.5625 / 1.5625 - 3.0));

  // Exactly representable constant: the mean reproduces the entries bit for
  // bit, so the central moments vanish exactly.
  const MomentSummary flat = moments({0.75, 0.75, 0.75});
  CHECK(flat.variance == doctest::Approx(0.0));
  CHECK(flat.skewness == 0.0);
  CHECK(flat.excess_kurtosis == 0.0);

  CHECK_THROWS_AS(moments({}), std::invalid_argument);
}
