// SPDX-License-Identifier: MIT
#pragma once

// Subsampled honest forests: B trees on uniform size-s subsamples drawn
// without replacement, with infinitesimal-jackknife variance estimates and
// normal-based confidence intervals.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cart/data.hpp"
#include "cart/tree.hpp"

namespace cart {

struct ForestConfig {
  std::int64_t B = 2000;
  std::int64_t s = 0;
  BuildConfig tree{TreeVariant::Breiman, /*honest=*/true, /*budget=*/0,
                   /*fully_grown=*/true, SeedSpec{}, 1e-12};
  SeedSpec seed{};
  int threads = 1;
};

struct Forest {
  ForestConfig config;
  std::int64_t n = 0;  // training-set size; the ledger has one column per sample
  int d = 0;
  std::vector<Tree> trees;
  // Per tree, the subsample rows in the order the tree consumed them (the
  // random permutation is part of the draw).
  std::vector<std::vector<std::int64_t>> members;

  double predict(const BitMatrix& x, std::int64_t row) const;
  std::vector<double> tree_predictions(const BitMatrix& x,
                                       std::int64_t row) const;

  // Infinitesimal-jackknife variance: Σ_i Cov_b(N_{b,i}, T_b(x))² over the n
  // training samples (1/B-normalized covariances), debiased by the Monte
  // Carlo noise floor of the squared covariances and re-including the
  // prediction's own B-tree Monte Carlo variance.  Requires B >= 2.
  double ij_variance(const BitMatrix& x, std::int64_t row) const;

  std::pair<double, double> confidence_interval(const BitMatrix& x,
                                                std::int64_t row,
                                                double level) const;

  // Directory layout: manifest.json (config + members), tree_XXXXX.json per
  // tree, ledger.csv as a B × n matrix of 0/1 membership indicators.
  void save(const std::string& dir) const;
  static Forest load(const std::string& dir);
};

Forest fit_forest(const Dataset& data, const ForestConfig& config);

struct DiameterEstimate {
  double mean = 0.0;
  double stderr_mean = 0.0;
};

// Monte Carlo estimate of ε(s) = E[Δ_m(P(x))] for one honest tree grown on a
// fresh size-s sample: reps independent datasets, each scored exactly by the
// population oracle.
DiameterEstimate expected_partition_diameter(const FeatureDistribution& dist,
                                             const SparseTarget& target,
                                             const NoiseModel& noise,
                                             std::int64_t s, std::int64_t reps,
                                             const BuildConfig& tree_config,
                                             const SeedSpec& seed);

}  // namespace cart
