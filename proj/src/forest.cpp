// SPDX-License-Identifier: MIT
#include "cart/forest.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "cart/oracle.hpp"
#include "cart/parallel.hpp"
#include "cart/stats.hpp"

namespace cart {

namespace {

void validate_config(const ForestConfig& config, std::int64_t n) {
  if (config.B < 1) throw std::invalid_argument("B must be >= 1");
  if (config.s > n) throw std::invalid_argument("subsample size exceeds n");
  const std::int64_t min_s = config.tree.honest ? 2 : 1;
  if (config.s < min_s)
    throw std::invalid_argument("subsample size too small");
  if (config.threads < 1) throw std::invalid_argument("threads must be >= 1");
}

Dataset subsample(const Dataset& data, const std::vector<std::int64_t>& rows) {
  Dataset sub;
  sub.d = data.d;
  sub.n = static_cast<std::int64_t>(rows.size());
  sub.x = BitMatrix(sub.n, sub.d);
  sub.y.resize(rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    sub.x.copy_row_from(static_cast<std::int64_t>(j), data.x, rows[j]);
    sub.y[j] = data.y[static_cast<std::size_t>(rows[j])];
  }
  return sub;
}

}  // namespace

Forest fit_forest(const Dataset& data, const ForestConfig& config) {
  if (data.n < 1) throw std::invalid_argument("empty dataset");
  validate_config(config, data.n);

  Forest forest;
  forest.config = config;
  forest.n = data.n;
  forest.d = data.d;
  forest.trees.resize(static_cast<std::size_t>(config.B));
  forest.members.resize(static_cast<std::size_t>(config.B));

  // Subsample draws are serial: cheap, and the stream per tree depends only
  // on (seed, index).
  for (std::int64_t b = 0; b < config.B; ++b) {
    Rng rng(config.seed, "subsample", static_cast<std::uint64_t>(b));
    forest.members[static_cast<std::size_t>(b)] =
        rng.sample_without_replacement(data.n, config.s);
  }

  parallel_for(config.B, config.threads, [&](std::int64_t b) {
    BuildConfig tree_cfg = config.tree;
    tree_cfg.seed = SeedSpec{derive_stream(config.seed.master_seed, "tree",
                                           static_cast<std::uint64_t>(b))};
    const Dataset sub = subsample(data, forest.members[static_cast<std::size_t>(b)]);
    forest.trees[static_cast<std::size_t>(b)] = build_tree(sub, tree_cfg);
  });
  return forest;
}

std::vector<double> Forest::tree_predictions(const BitMatrix& x,
                                             std::int64_t row) const {
  std::vector<double> preds(trees.size());
  for (std::size_t b = 0; b < trees.size(); ++b)
    preds[b] = trees[b].predict(x, row);
  return preds;
}

double Forest::predict(const BitMatrix& x, std::int64_t row) const {
  double sum = 0.0;
  for (const Tree& t : trees) sum += t.predict(x, row);
  return sum / static_cast<double>(trees.size());
}

double Forest::ij_variance(const BitMatrix& x, std::int64_t row) const {
  const std::int64_t B = static_cast<std::int64_t>(trees.size());
  if (B < 2) throw std::invalid_argument("ij_variance needs B >= 2");
  std::vector<double> pred_sum(static_cast<std::size_t>(n), 0.0);
  std::vector<std::int64_t> cnt(static_cast<std::size_t>(n), 0);
  double total = 0.0, total_sq = 0.0;
  for (std::size_t b = 0; b < trees.size(); ++b) {
    const double t = trees[b].predict(x, row);
    total += t;
    total_sq += t * t;
    for (std::int64_t i : members[b]) {
      pred_sum[static_cast<std::size_t>(i)] += t;
      ++cnt[static_cast<std::size_t>(i)];
    }
  }
  const double mean = total / static_cast<double>(B);
  double v = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double cov =
        pred_sum[static_cast<std::size_t>(i)] / static_cast<double>(B) -
        (static_cast<double>(cnt[static_cast<std::size_t>(i)]) /
         static_cast<double>(B)) *
            mean;
    v += cov * cov;
  }
  // Each squared covariance carries Monte Carlo noise of expectation
  // Var(N_i) * Var_b(T) / B; summed over i with the design-exact
  // sum_i Var(N_i) = s(1 - s/n), it would otherwise dominate whenever B is
  // not much larger than n.  Subtracting it keeps the estimate centred on
  // the subsampling variance at practical B.  The prediction itself is a
  // B-tree Monte Carlo average, so its own noise, Var_b(T)/B exactly, is
  // added back; this also keeps the estimate away from the degenerate zero
  // after clipping.
  const double tree_var =
      std::max(0.0, total_sq / static_cast<double>(B) - mean * mean);
  const double s_frac =
      static_cast<double>(config.s) / static_cast<double>(n);
  const double mc_bias = static_cast<double>(config.s) * (1.0 - s_frac) *
                         tree_var / static_cast<double>(B);
  return std::max(0.0, v - mc_bias) + tree_var / static_cast<double>(B);
}

std::pair<double, double> Forest::confidence_interval(const BitMatrix& x,
                                                      std::int64_t row,
                                                      double level) const {
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("confidence level must lie in (0, 1)");
  const double pred = predict(x, row);
  const double z = normal_quantile(0.5 * (1.0 + level));
  const double hw = z * std::sqrt(ij_variance(x, row));
  return {pred - hw, pred + hw};
}

namespace {

nlohmann::json build_config_json(const BuildConfig& cfg) {
  nlohmann::json j;
  j["variant"] =
      cfg.variant == TreeVariant::LevelSplit ? "level_split" : "breiman";
  j["honest"] = cfg.honest;
  j["budget"] = cfg.budget;
  j["fully_grown"] = cfg.fully_grown;
  j["tie_tolerance"] = cfg.tie_tolerance;
  return j;
}

BuildConfig parse_build_config(const nlohmann::json& j) {
  BuildConfig cfg;
  const std::string variant = j.at("variant").get<std::string>();
  if (variant == "level_split")
    cfg.variant = TreeVariant::LevelSplit;
  else if (variant == "breiman")
    cfg.variant = TreeVariant::Breiman;
  else
    throw std::invalid_argument("manifest: unknown tree variant");
  cfg.honest = j.at("honest").get<bool>();
  cfg.budget = j.at("budget").get<std::int64_t>();
  cfg.fully_grown = j.at("fully_grown").get<bool>();
  cfg.tie_tolerance = j.at("tie_tolerance").get<double>();
  return cfg;
}

std::string tree_file_name(std::int64_t b) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "tree_%05lld.json",
                static_cast<long long>(b));
  return buf;
}

}  // namespace

void Forest::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::json manifest;
  manifest["B"] = config.B;
  manifest["s"] = config.s;
  manifest["seed"] = config.seed.master_seed;
  manifest["tree"] = build_config_json(config.tree);
  manifest["n"] = n;
  manifest["d"] = d;
  nlohmann::json mem = nlohmann::json::array();
  for (const auto& rows : members) {
    nlohmann::json r = nlohmann::json::array();
    for (std::int64_t i : rows) r.push_back(i + 1);  // 1-based externally
    mem.push_back(std::move(r));
  }
  manifest["members"] = std::move(mem);
  {
    std::ofstream out(fs::path(dir) / "manifest.json");
    out << manifest.dump(2) << "\n";
  }

  for (std::size_t b = 0; b < trees.size(); ++b) {
    std::ofstream out(fs::path(dir) / tree_file_name(static_cast<std::int64_t>(b)));
    out << trees[b].to_json() << "\n";
  }

  // Ledger: one row per tree, one 0/1 column per training sample.
  std::ofstream ledger(fs::path(dir) / "ledger.csv");
  std::vector<char> flags;
  for (const auto& rows : members) {
    flags.assign(static_cast<std::size_t>(n), 0);
    for (std::int64_t i : rows) flags[static_cast<std::size_t>(i)] = 1;
    for (std::int64_t i = 0; i < n; ++i) {
      if (i) ledger << ',';
      ledger << (flags[static_cast<std::size_t>(i)] ? '1' : '0');
    }
    ledger << '\n';
  }
}

Forest Forest::load(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw std::invalid_argument("forest manifest not found");
  nlohmann::json manifest;
  in >> manifest;

  Forest forest;
  forest.config.B = manifest.at("B").get<std::int64_t>();
  forest.config.s = manifest.at("s").get<std::int64_t>();
  forest.config.seed = SeedSpec{manifest.at("seed").get<std::uint64_t>()};
  forest.config.tree = parse_build_config(manifest.at("tree"));
  forest.n = manifest.at("n").get<std::int64_t>();
  forest.d = manifest.at("d").get<int>();
  for (const auto& r : manifest.at("members")) {
    std::vector<std::int64_t> rows;
    for (const auto& i : r) {
      const std::int64_t row = i.get<std::int64_t>() - 1;
      if (row < 0 || row >= forest.n)
        throw std::invalid_argument("manifest: member row out of range");
      rows.push_back(row);
    }
    if (static_cast<std::int64_t>(rows.size()) != forest.config.s)
      throw std::invalid_argument("manifest: member list size != s");
    forest.members.push_back(std::move(rows));
  }
  if (static_cast<std::int64_t>(forest.members.size()) != forest.config.B)
    throw std::invalid_argument("manifest: member count != B");

  for (std::int64_t b = 0; b < forest.config.B; ++b) {
    std::ifstream tin(fs::path(dir) / tree_file_name(b));
    if (!tin) throw std::invalid_argument("forest tree file missing");
    std::stringstream ss;
    ss << tin.rdbuf();
    forest.trees.push_back(Tree::from_json(ss.str()));
  }
  return forest;
}

DiameterEstimate expected_partition_diameter(const FeatureDistribution& dist,
                                             const SparseTarget& target,
                                             const NoiseModel& noise,
                                             std::int64_t s, std::int64_t reps,
                                             const BuildConfig& tree_config,
                                             const SeedSpec& seed) {
  if (reps < 1) throw std::invalid_argument("reps must be >= 1");
  const PopulationProblem pb(dist, target);
  std::vector<double> vals(static_cast<std::size_t>(reps));
  for (std::int64_t rep = 0; rep < reps; ++rep) {
    const SeedSpec data_seed{derive_stream(seed.master_seed, "data",
                                           static_cast<std::uint64_t>(rep))};
    const Dataset data = sample_dataset(dist, target, noise, s, data_seed);
    BuildConfig cfg = tree_config;
    cfg.seed = SeedSpec{derive_stream(seed.master_seed, "fit",
                                      static_cast<std::uint64_t>(rep))};
    const Tree tree = build_tree(data, cfg);
    vals[static_cast<std::size_t>(rep)] =
        expected_pointwise_diameter(pb, tree.to_partition());
  }
  DiameterEstimate est;
  for (double v : vals) est.mean += v;
  est.mean /= static_cast<double>(reps);
  if (reps >= 2) {
    double ss = 0.0;
    for (double v : vals) ss += (v - est.mean) * (v - est.mean);
    est.stderr_mean = std::sqrt(ss / static_cast<double>(reps - 1) /
                                static_cast<double>(reps));
  }
  return est;
}

}  // namespace cart
