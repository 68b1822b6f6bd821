// SPDX-License-Identifier: MIT
#include "cart/experiments.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "cart/errors.hpp"
#include "cart/forest.hpp"
#include "cart/oracle.hpp"
#include "cart/parallel.hpp"
#include "cart/rng.hpp"
#include "cart/stats.hpp"
#include "cart/tree.hpp"
#include "json.hpp"

namespace cart {
namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& msg) { throw config_error(msg); }

// ---------------------------------------------------------------------------
// JSON access with config_error diagnostics.

void require_object(const json& j, const std::string& ctx) {
  if (!j.is_object()) bad(ctx + ": expected a JSON object");
}

// Rejects unknown keys and reports missing required ones.
void check_keys(const json& obj, const std::string& ctx,
                std::initializer_list<const char*> required,
                std::initializer_list<const char*> optional) {
  require_object(obj, ctx);
  for (const char* k : required) {
    if (!obj.contains(k)) bad(ctx + ": missing required key \"" + k + "\"");
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const std::string& k = it.key();
    bool known = false;
    for (const char* r : required) known = known || k == r;
    for (const char* o : optional) known = known || k == o;
    if (!known) bad(ctx + ": unknown key \"" + k + "\"");
  }
}

double get_num(const json& obj, const std::string& ctx, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_number()) bad(ctx + "." + key + ": expected a number");
  return v.get<double>();
}

std::int64_t get_int(const json& obj, const std::string& ctx,
                     const char* key) {
  const json& v = obj.at(key);
  if (!v.is_number_integer()) bad(ctx + "." + key + ": expected an integer");
  return v.get<std::int64_t>();
}

std::string get_str(const json& obj, const std::string& ctx, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_string()) bad(ctx + "." + key + ": expected a string");
  return v.get<std::string>();
}

bool get_bool(const json& obj, const std::string& ctx, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_boolean()) bad(ctx + "." + key + ": expected a boolean");
  return v.get<bool>();
}

std::vector<std::int64_t> get_int_array(const json& obj, const std::string& ctx,
                                        const char* key) {
  const json& v = obj.at(key);
  if (!v.is_array() || v.empty())
    bad(ctx + "." + key + ": expected a nonempty array");
  std::vector<std::int64_t> out;
  out.reserve(v.size());
  for (const json& e : v) {
    if (!e.is_number_integer()) bad(ctx + "." + key + ": expected integers");
    out.push_back(e.get<std::int64_t>());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Problem parsing.  Coordinates are 1-based in configs, 0-based internally.

int to_coord(std::int64_t c, int d, const std::string& ctx) {
  if (c < 1 || c > d) bad(ctx + ": coordinate " + std::to_string(c) +
                          " out of range 1.." + std::to_string(d));
  return static_cast<int>(c - 1);
}

FeatureDistribution parse_distribution(const json& j, int d) {
  const std::string ctx = "problem.distribution";
  require_object(j, ctx);
  const std::string kind = get_str(j, ctx, "kind");
  try {
    if (kind == "product") {
      check_keys(j, ctx, {"kind", "p"}, {});
      const json& p = j.at("p");
      if (p.is_number()) return FeatureDistribution::product(d, p.get<double>());
      if (p.is_array()) {
        std::vector<double> probs;
        for (const json& e : p) {
          if (!e.is_number()) bad(ctx + ".p: expected numbers");
          probs.push_back(e.get<double>());
        }
        if (static_cast<int>(probs.size()) != d)
          bad(ctx + ".p: expected " + std::to_string(d) + " entries");
        return FeatureDistribution::product(probs);
      }
      bad(ctx + ".p: expected a number or array");
    }
    if (kind == "block_correlated") {
      check_keys(j, ctx, {"kind", "block", "pi", "p_others"}, {});
      std::vector<int> block;
      for (std::int64_t c : get_int_array(j, ctx, "block"))
        block.push_back(to_coord(c, d, ctx + ".block"));
      const json& pij = j.at("pi");
      if (!pij.is_array()) bad(ctx + ".pi: expected an array");
      std::vector<double> pi;
      for (const json& e : pij) {
        if (!e.is_number()) bad(ctx + ".pi: expected numbers");
        pi.push_back(e.get<double>());
      }
      return FeatureDistribution::block_correlated(d, block, pi,
                                                   get_num(j, ctx, "p_others"));
    }
  } catch (const config_error&) {
    throw;
  } catch (const std::invalid_argument& e) {
    bad(ctx + ": " + e.what());
  }
  bad(ctx + ".kind: unknown kind \"" + kind + "\"");
}

SparseTarget parse_target(const json& j, int d) {
  const std::string ctx = "problem.target";
  require_object(j, ctx);
  const std::string kind = get_str(j, ctx, "kind");
  SparseTarget t;
  t.d = d;
  if (kind == "one_sparse") {
    check_keys(j, ctx, {"kind", "coord"}, {"amplitude"});
    const double a = j.contains("amplitude") ? get_num(j, ctx, "amplitude") : 0.5;
    t.relevant = {to_coord(get_int(j, ctx, "coord"), d, ctx + ".coord")};
    t.table = {-a, a};
  } else if (kind == "xor") {
    check_keys(j, ctx, {"kind"}, {"coords", "amplitude"});
    const double a =
        j.contains("amplitude") ? get_num(j, ctx, "amplitude") : 0.25;
    std::vector<std::int64_t> cs = {1, 2};
    if (j.contains("coords")) cs = get_int_array(j, ctx, "coords");
    if (cs.size() != 2) bad(ctx + ".coords: expected exactly 2 coordinates");
    t.relevant = {to_coord(cs[0], d, ctx + ".coords"),
                  to_coord(cs[1], d, ctx + ".coords")};
    t.table = {-a, a, a, -a};
  } else if (kind == "interaction") {
    // m(x) = a*x1 + a*x2 - b*x1*x2, affinely rescaled into [-1/2, 1/2].
    // Affine rescaling multiplies every conditional-variance gain by the
    // same constant, so ratio-based diagnostics are unchanged.
    check_keys(j, ctx, {"kind", "a", "b"}, {"coords"});
    const double a = get_num(j, ctx, "a");
    const double b = get_num(j, ctx, "b");
    std::vector<std::int64_t> cs = {1, 2};
    if (j.contains("coords")) cs = get_int_array(j, ctx, "coords");
    if (cs.size() != 2) bad(ctx + ".coords: expected exactly 2 coordinates");
    t.relevant = {to_coord(cs[0], d, ctx + ".coords"),
                  to_coord(cs[1], d, ctx + ".coords")};
    std::vector<double> raw = {0.0, a, a, 2.0 * a - b};
    const double lo = *std::min_element(raw.begin(), raw.end());
    const double hi = *std::max_element(raw.begin(), raw.end());
    t.table.assign(4, 0.0);
    if (hi - lo > 1e-300) {
      for (int z = 0; z < 4; ++z)
        t.table[z] = (raw[z] - 0.5 * (hi + lo)) / (hi - lo);
    }
  } else if (kind == "table") {
    check_keys(j, ctx, {"kind", "relevant", "values"}, {});
    for (std::int64_t c : get_int_array(j, ctx, "relevant"))
      t.relevant.push_back(to_coord(c, d, ctx + ".relevant"));
    const json& vals = j.at("values");
    if (!vals.is_array()) bad(ctx + ".values: expected an array");
    for (const json& e : vals) {
      if (!e.is_number()) bad(ctx + ".values: expected numbers");
      t.table.push_back(e.get<double>());
    }
  } else if (kind == "constant") {
    check_keys(j, ctx, {"kind", "value"}, {});
    t.table = {get_num(j, ctx, "value")};
  } else {
    bad(ctx + ".kind: unknown kind \"" + kind + "\"");
  }
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    bad(ctx + ": " + e.what());
  }
  return t;
}

NoiseModel parse_noise(const json& j) {
  const std::string ctx = "problem.noise";
  require_object(j, ctx);
  const std::string kind = get_str(j, ctx, "kind");
  NoiseModel nm;
  if (kind == "none") {
    check_keys(j, ctx, {"kind"}, {});
    nm.kind = NoiseModel::Kind::None;
    nm.eps = 0.0;
  } else if (kind == "uniform" || kind == "rademacher") {
    check_keys(j, ctx, {"kind", "eps"}, {});
    nm.kind = kind == "uniform" ? NoiseModel::Kind::Uniform
                                : NoiseModel::Kind::Rademacher;
    nm.eps = get_num(j, ctx, "eps");
  } else {
    bad(ctx + ".kind: unknown kind \"" + kind + "\"");
  }
  try {
    nm.validate();
  } catch (const std::invalid_argument& e) {
    bad(ctx + ": " + e.what());
  }
  return nm;
}

Problem parse_problem(const json& j) {
  const std::string ctx = "problem";
  check_keys(j, ctx, {"d", "distribution", "target"}, {"noise"});
  const std::int64_t d64 = get_int(j, ctx, "d");
  if (d64 < 1 || d64 > 1'000'000) bad(ctx + ".d: expected 1 <= d <= 1000000");
  const int d = static_cast<int>(d64);
  Problem p{parse_distribution(j.at("distribution"), d),
            parse_target(j.at("target"), d), NoiseModel{}};
  if (j.contains("noise")) p.noise = parse_noise(j.at("noise"));
  return p;
}

// ---------------------------------------------------------------------------
// Tree / forest config parsing.

BuildConfig parse_tree_config(const json& j, const std::string& ctx,
                              BuildConfig base) {
  check_keys(j, ctx, {},
             {"variant", "honest", "budget", "fully_grown", "tie_tolerance"});
  if (j.contains("variant")) {
    const std::string v = get_str(j, ctx, "variant");
    if (v == "level_split") base.variant = TreeVariant::LevelSplit;
    else if (v == "breiman") base.variant = TreeVariant::Breiman;
    else bad(ctx + ".variant: expected \"level_split\" or \"breiman\"");
  }
  if (j.contains("honest")) base.honest = get_bool(j, ctx, "honest");
  if (j.contains("budget")) {
    const std::int64_t b = get_int(j, ctx, "budget");
    if (b < 0) bad(ctx + ".budget: expected a nonnegative integer");
    base.budget = b;
  }
  if (j.contains("fully_grown")) base.fully_grown = get_bool(j, ctx, "fully_grown");
  if (j.contains("tie_tolerance")) {
    base.tie_tolerance = get_num(j, ctx, "tie_tolerance");
    if (!(base.tie_tolerance >= 0))
      bad(ctx + ".tie_tolerance: expected a nonnegative number");
  }
  return base;
}

// Subsample-size rule: "fixed:<k>" or "pow:<a>" with a < 1/2 so that the
// subsample stays o(sqrt(n)).
struct SRule {
  bool fixed = true;
  std::int64_t k = 1;
  double a = 0.25;

  std::int64_t resolve(std::int64_t n) const {
    if (fixed) return k;
    return static_cast<std::int64_t>(std::ceil(std::pow(double(n), a)));
  }
};

SRule parse_s_rule(const std::string& text, const std::string& ctx) {
  const auto colon = text.find(':');
  if (colon == std::string::npos)
    bad(ctx + ": expected \"fixed:<k>\" or \"pow:<a>\"");
  const std::string head = text.substr(0, colon);
  const std::string tail = text.substr(colon + 1);
  SRule rule;
  try {
    if (head == "fixed") {
      rule.fixed = true;
      rule.k = std::stoll(tail);
      if (rule.k < 1) bad(ctx + ": fixed subsample size must be >= 1");
    } else if (head == "pow") {
      rule.fixed = false;
      rule.a = std::stod(tail);
      if (!(rule.a > 0 && rule.a < 0.5))
        bad(ctx + ": pow exponent must lie in (0, 1/2)");
    } else {
      bad(ctx + ": expected \"fixed:<k>\" or \"pow:<a>\"");
    }
  } catch (const config_error&) {
    throw;
  } catch (const std::exception&) {
    bad(ctx + ": could not parse \"" + text + "\"");
  }
  return rule;
}

// ---------------------------------------------------------------------------
// Formatting and file output.

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_int(std::int64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%" PRId64, v);
  return buf;
}

// JSON has no literals for non-finite values; encode them as strings.
json json_num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << content;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_summary(const std::filesystem::path& dir, const json& summary) {
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");
}

// Splits one CSV line at commas; fields themselves never contain commas.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// Re-reads an emitted rows.csv so summaries aggregate what was actually
// written rather than a parallel in-memory copy.
CsvTable read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty csv");
  table.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const std::string& f : split_csv_line(line))
      row.push_back(std::strtod(f.c_str(), nullptr));
    if (row.size() != table.header.size())
      throw std::runtime_error("ragged csv row in " + path.string());
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<double> leaf_values_preorder(const Tree& tree) {
  std::vector<double> out;
  std::vector<int> stack = {0};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const TreeNode& node = tree.nodes[id];
    if (node.is_leaf()) {
      out.push_back(node.value);
    } else {
      stack.push_back(node.child1);
      stack.push_back(node.child0);
    }
  }
  return out;
}

// Monte Carlo query set shared by every replicate of an experiment.
struct QuerySet {
  BitMatrix x;
  std::vector<double> m;

  QuerySet(const Problem& prob, std::int64_t count, const SeedSpec& seed)
      : x(count, prob.dist.d), m(count) {
    Rng rng(seed, "query");
    for (std::int64_t q = 0; q < count; ++q) {
      prob.dist.sample_row(rng, x, q);
      m[q] = prob.target.eval(x, q);
    }
  }
};

// ---------------------------------------------------------------------------
// rate: empirical mean-squared-error decay across a sample-size grid.

void run_rate(const json& cfg, const std::filesystem::path& out_dir,
              const SeedSpec& seed, int threads) {
  const Problem prob = parse_problem(cfg.at("problem"));
  const json& rc = cfg.at("rate");
  check_keys(rc, "rate", {"n_grid", "replicates", "estimator"},
             {"tree", "forest", "mse"});

  const std::vector<std::int64_t> n_grid = get_int_array(rc, "rate", "n_grid");
  for (std::int64_t n : n_grid)
    if (n < 2) bad("rate.n_grid: sample sizes must be >= 2");
  const std::int64_t reps = get_int(rc, "rate", "replicates");
  if (reps < 1) bad("rate.replicates: expected >= 1");

  const std::string estimator = get_str(rc, "rate", "estimator");
  if (estimator != "tree" && estimator != "forest")
    bad("rate.estimator: expected \"tree\" or \"forest\"");
  const bool use_forest = estimator == "forest";
  if (use_forest && rc.contains("tree"))
    bad("rate.tree: use rate.forest.tree with the forest estimator");
  if (!use_forest && rc.contains("forest"))
    bad("rate.forest: only valid with the forest estimator");

  BuildConfig tree_cfg;
  std::int64_t forest_b = 0;
  SRule s_rule;
  if (use_forest) {
    if (!rc.contains("forest")) bad("rate: missing required key \"forest\"");
    const json& fj = rc.at("forest");
    check_keys(fj, "rate.forest", {"B", "s_rule"}, {"tree"});
    forest_b = get_int(fj, "rate.forest", "B");
    if (forest_b < 1) bad("rate.forest.B: expected >= 1");
    s_rule = parse_s_rule(get_str(fj, "rate.forest", "s_rule"),
                          "rate.forest.s_rule");
    tree_cfg.variant = TreeVariant::Breiman;
    tree_cfg.honest = true;
    tree_cfg.fully_grown = true;
    if (fj.contains("tree"))
      tree_cfg = parse_tree_config(fj.at("tree"), "rate.forest.tree", tree_cfg);
  } else {
    if (!rc.contains("tree")) bad("rate: missing required key \"tree\"");
    tree_cfg = parse_tree_config(rc.at("tree"), "rate.tree", BuildConfig{});
  }

  // MSE mode: exact integration against the population (trees only, and the
  // partition must stay within the conditioning cap), or Monte Carlo at a
  // fixed query set shared across the whole grid.
  bool exact_mse = !use_forest;
  std::int64_t num_queries = 100'000;
  if (rc.contains("mse")) {
    const json& mj = rc.at("mse");
    if (mj.is_string()) {
      if (mj.get<std::string>() != "exact")
        bad("rate.mse: expected \"exact\" or a monte_carlo object");
      exact_mse = true;
    } else {
      check_keys(mj, "rate.mse", {"kind", "queries"}, {});
      if (get_str(mj, "rate.mse", "kind") != "monte_carlo")
        bad("rate.mse.kind: expected \"monte_carlo\"");
      num_queries = get_int(mj, "rate.mse", "queries");
      if (num_queries < 1) bad("rate.mse.queries: expected >= 1");
      exact_mse = false;
    }
  }
  if (exact_mse && use_forest)
    bad("rate.mse: exact integration is only available for the tree estimator");

  // Validate subsample sizes up front so failures surface as config errors.
  if (use_forest) {
    for (std::int64_t n : n_grid) {
      const std::int64_t s = s_rule.resolve(n);
      if (s < 2 || s > n)
        bad("rate.forest.s_rule: resolved subsample size " + std::to_string(s) +
            " invalid for n=" + std::to_string(n));
    }
  }

  const PopulationProblem pb(prob.dist, prob.target);
  std::unique_ptr<QuerySet> queries;
  if (!exact_mse)
    queries = std::make_unique<QuerySet>(prob, num_queries, seed);

  const std::int64_t tasks = static_cast<std::int64_t>(n_grid.size()) * reps;
  std::vector<double> mse(tasks);
  parallel_for(tasks, threads, [&](std::int64_t idx) {
    const std::int64_t n = n_grid[idx / reps];
    const Dataset data =
        sample_dataset(prob.dist, prob.target, prob.noise, n,
                       SeedSpec{derive_stream(seed.master_seed, "data", idx)});
    const SeedSpec fit_seed{derive_stream(seed.master_seed, "fit", idx)};
    if (use_forest) {
      ForestConfig fc;
      fc.B = forest_b;
      fc.s = s_rule.resolve(n);
      fc.tree = tree_cfg;
      fc.seed = fit_seed;
      fc.threads = 1;
      const Forest forest = fit_forest(data, fc);
      double sum = 0.0;
      for (std::int64_t q = 0; q < num_queries; ++q) {
        const double err = forest.predict(queries->x, q) - queries->m[q];
        sum += err * err;
      }
      mse[idx] = sum / double(num_queries);
    } else {
      BuildConfig c = tree_cfg;
      c.seed = fit_seed;
      const Tree tree = build_tree(data, c);
      if (exact_mse) {
        const std::vector<double> leaves = leaf_values_preorder(tree);
        std::vector<std::optional<double>> values(leaves.begin(), leaves.end());
        mse[idx] = estimator_population_mse(pb, tree.to_partition(), values);
      } else {
        double sum = 0.0;
        for (std::int64_t q = 0; q < num_queries; ++q) {
          const double err = tree.predict(queries->x, q) - queries->m[q];
          sum += err * err;
        }
        mse[idx] = sum / double(num_queries);
      }
    }
  });

  std::string csv = "n,replicate,mse\n";
  for (std::int64_t idx = 0; idx < tasks; ++idx) {
    csv += fmt_int(n_grid[idx / reps]);
    csv += ',';
    csv += fmt_int(idx % reps + 1);
    csv += ',';
    csv += fmt_double(mse[idx]);
    csv += '\n';
  }
  write_text_file(out_dir / "rows.csv", csv);

  const CsvTable table = read_numeric_csv(out_dir / "rows.csv");
  std::vector<double> mean_mse(n_grid.size(), 0.0);
  for (const auto& row : table.rows) {
    for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
      if (static_cast<std::int64_t>(row[0]) == n_grid[gi]) {
        mean_mse[gi] += row[2];
        break;
      }
    }
  }
  for (double& v : mean_mse) v /= double(reps);

  std::vector<double> lx, ly;
  for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
    if (mean_mse[gi] > 0) {
      lx.push_back(std::log2(double(n_grid[gi])));
      ly.push_back(std::log2(mean_mse[gi]));
    }
  }
  double slope = std::nan(""), intercept = std::nan(""),
         slope_stderr = std::nan("");
  if (lx.size() >= 2) {
    const OlsFit fit = ols_fit(lx, ly);
    slope = fit.slope;
    intercept = fit.intercept;
    slope_stderr = fit.slope_stderr;
  }

  json summary;
  summary["kind"] = "rate";
  summary["estimator"] = estimator;
  summary["n_grid"] = n_grid;
  summary["replicates"] = reps;
  json means = json::array();
  for (double v : mean_mse) means.push_back(json_num(v));
  summary["mean_mse"] = means;
  summary["log2_slope"] = json_num(slope);
  summary["log2_slope_stderr"] = json_num(slope_stderr);
  summary["log2_intercept"] = json_num(intercept);
  write_summary(out_dir, summary);
}

// ---------------------------------------------------------------------------
// coverage: infinitesimal-jackknife confidence intervals at fixed queries.

void run_coverage(const json& cfg, const std::filesystem::path& out_dir,
                  const SeedSpec& seed, int threads) {
  const Problem prob = parse_problem(cfg.at("problem"));
  const json& cc = cfg.at("coverage");
  check_keys(cc, "coverage",
             {"n", "s", "B", "replicates", "num_queries", "level"}, {"tree"});

  const std::int64_t n = get_int(cc, "coverage", "n");
  const std::int64_t s = get_int(cc, "coverage", "s");
  const std::int64_t B = get_int(cc, "coverage", "B");
  const std::int64_t reps = get_int(cc, "coverage", "replicates");
  const std::int64_t num_queries = get_int(cc, "coverage", "num_queries");
  const double level = get_num(cc, "coverage", "level");
  if (n < 2) bad("coverage.n: expected >= 2");
  if (s < 2) bad("coverage.s: expected >= 2");
  if (B < 2) bad("coverage.B: variance estimation needs B >= 2");
  if (reps < 1) bad("coverage.replicates: expected >= 1");
  if (num_queries < 1) bad("coverage.num_queries: expected >= 1");
  if (!(level > 0 && level < 1)) bad("coverage.level: expected 0 < level < 1");

  // The sampling theory behind the intervals needs small subsamples,
  // s = o(sqrt(n)); reject clear violations, warn at the boundary.
  std::vector<std::string> warnings;
  if (s * s > n)
    bad("coverage.s: s^2 > n violates the small-subsample requirement "
        "s = o(sqrt(n))");
  if (s * s == n)
    warnings.push_back("s equals sqrt(n); intervals assume s = o(sqrt(n))");

  BuildConfig tree_cfg;
  tree_cfg.variant = TreeVariant::Breiman;
  tree_cfg.honest = true;
  tree_cfg.fully_grown = true;
  if (cc.contains("tree"))
    tree_cfg = parse_tree_config(cc.at("tree"), "coverage.tree", tree_cfg);

  const QuerySet queries(prob, num_queries, seed);
  const double z = normal_quantile(0.5 * (1.0 + level));

  struct Row {
    double pred, var, lo, hi;
    int covered;
  };
  std::vector<Row> rows(static_cast<std::size_t>(reps * num_queries));
  parallel_for(reps, threads, [&](std::int64_t rep) {
    const Dataset data =
        sample_dataset(prob.dist, prob.target, prob.noise, n,
                       SeedSpec{derive_stream(seed.master_seed, "data", rep)});
    ForestConfig fc;
    fc.B = B;
    fc.s = s;
    fc.tree = tree_cfg;
    fc.seed = SeedSpec{derive_stream(seed.master_seed, "fit", rep)};
    fc.threads = 1;
    const Forest forest = fit_forest(data, fc);
    for (std::int64_t q = 0; q < num_queries; ++q) {
      Row& r = rows[static_cast<std::size_t>(rep * num_queries + q)];
      r.pred = forest.predict(queries.x, q);
      r.var = forest.ij_variance(queries.x, q);
      const double half = z * std::sqrt(std::max(r.var, 0.0));
      r.lo = r.pred - half;
      r.hi = r.pred + half;
      r.covered = (queries.m[q] >= r.lo && queries.m[q] <= r.hi) ? 1 : 0;
    }
  });

  std::string csv = "replicate,x_id,pred,ij_var,lo,hi,covered\n";
  for (std::int64_t rep = 0; rep < reps; ++rep) {
    for (std::int64_t q = 0; q < num_queries; ++q) {
      const Row& r = rows[static_cast<std::size_t>(rep * num_queries + q)];
      csv += fmt_int(rep + 1);
      csv += ',';
      csv += fmt_int(q + 1);
      csv += ',';
      csv += fmt_double(r.pred);
      csv += ',';
      csv += fmt_double(r.var);
      csv += ',';
      csv += fmt_double(r.lo);
      csv += ',';
      csv += fmt_double(r.hi);
      csv += ',';
      csv += fmt_int(r.covered);
      csv += '\n';
    }
  }
  write_text_file(out_dir / "rows.csv", csv);

  // Aggregate from the emitted rows.  Standardized residuals use the true
  // target value at each query, excluding degenerate zero-variance rows.
  const CsvTable table = read_numeric_csv(out_dir / "rows.csv");
  std::int64_t covered = 0;
  std::vector<double> residuals;
  std::int64_t excluded = 0;
  for (const auto& row : table.rows) {
    const std::int64_t q = static_cast<std::int64_t>(row[1]) - 1;
    covered += static_cast<std::int64_t>(row[6]);
    if (row[3] > 0) {
      residuals.push_back((row[2] - queries.m[q]) / std::sqrt(row[3]));
    } else {
      ++excluded;
    }
  }
  const std::int64_t total = static_cast<std::int64_t>(table.rows.size());
  if (excluded > 0)
    warnings.push_back(std::to_string(excluded) +
                       " zero-variance rows excluded from residual moments");

  json summary;
  summary["kind"] = "coverage";
  summary["level"] = level;
  summary["n_intervals"] = total;
  summary["coverage"] = json_num(total > 0 ? double(covered) / double(total)
                                           : std::nan(""));
  summary["excluded_zero_variance"] = excluded;
  if (!residuals.empty()) {
    const MomentSummary m = moments(residuals);
    summary["residual_mean"] = json_num(m.mean);
    summary["residual_variance"] = json_num(m.variance);
    summary["residual_skewness"] = json_num(m.skewness);
    summary["residual_excess_kurtosis"] = json_num(m.excess_kurtosis);
  } else {
    summary["residual_mean"] = "nan";
    summary["residual_variance"] = "nan";
    summary["residual_skewness"] = "nan";
    summary["residual_excess_kurtosis"] = "nan";
  }
  summary["warnings"] = warnings;
  write_summary(out_dir, summary);
}

// ---------------------------------------------------------------------------
// xor: how long level splitting takes to detect a pure-interaction pair.

void run_xor(const json& cfg, const std::filesystem::path& out_dir,
             const SeedSpec& seed, int threads) {
  const json& xc = cfg.at("xor");
  check_keys(xc, "xor", {"d_grid", "replicates"}, {});
  const std::vector<std::int64_t> d_grid = get_int_array(xc, "xor", "d_grid");
  for (std::int64_t d : d_grid)
    if (d < 3 || d > 4096) bad("xor.d_grid: expected 3 <= d <= 4096");
  const std::int64_t reps = get_int(xc, "xor", "replicates");
  if (reps < 1) bad("xor.replicates: expected >= 1");

  // One population per dimension: uniform features, xor target on the first
  // two coordinates.  Shared read-only across worker threads.
  std::vector<std::unique_ptr<PopulationProblem>> pops;
  for (std::int64_t d : d_grid) {
    SparseTarget t;
    t.d = static_cast<int>(d);
    t.relevant = {0, 1};
    t.table = {-0.25, 0.25, 0.25, -0.25};
    pops.push_back(std::make_unique<PopulationProblem>(
        FeatureDistribution::product(static_cast<int>(d), 0.5), t));
  }

  const std::int64_t tasks = static_cast<std::int64_t>(d_grid.size()) * reps;
  std::vector<std::int64_t> first_hit(tasks);
  parallel_for(tasks, threads, [&](std::int64_t idx) {
    const PopulationProblem& pb = *pops[idx / reps];
    const int d = pb.d();
    Rng rng(seed, "tie", idx);
    SplitSet S;
    std::int64_t hit = 0;
    // The xor pair yields zero variance reduction until one member is fixed,
    // so every pre-hit level picks uniformly among the irrelevant majority.
    // Once only the pair remains the next selection must hit.
    for (int level = 1; level <= d; ++level) {
      const int c = select_level_coordinate(pb, S, rng);
      if (c == 0 || c == 1) {
        hit = level;
        break;
      }
      S.push_back(c);
    }
    first_hit[idx] = hit;
  });

  std::string csv = "d,replicate,first_hit_level\n";
  for (std::int64_t idx = 0; idx < tasks; ++idx) {
    csv += fmt_int(d_grid[idx / reps]);
    csv += ',';
    csv += fmt_int(idx % reps + 1);
    csv += ',';
    csv += fmt_int(first_hit[idx]);
    csv += '\n';
  }
  write_text_file(out_dir / "rows.csv", csv);

  const CsvTable table = read_numeric_csv(out_dir / "rows.csv");
  json per_d = json::array();
  for (std::size_t gi = 0; gi < d_grid.size(); ++gi) {
    const std::int64_t d = d_grid[gi];
    const std::int64_t k =
        static_cast<std::int64_t>(std::floor(std::sqrt(double(d))));
    std::int64_t count = 0, missed = 0;
    double sum = 0.0;
    for (const auto& row : table.rows) {
      if (static_cast<std::int64_t>(row[0]) != d) continue;
      ++count;
      sum += row[2];
      if (static_cast<std::int64_t>(row[2]) > k) ++missed;
    }
    // Exact no-hit probability within k levels: at each level the two
    // relevant coordinates are among the remaining candidates and the pick
    // is uniform, so Pr(miss k times) = prod_{l=0}^{k-1} (1 - 2/(d-l)).
    double exact = 1.0;
    for (std::int64_t l = 0; l < k; ++l) exact *= 1.0 - 2.0 / double(d - l);
    json entry;
    entry["d"] = d;
    entry["replicates"] = count;
    entry["mean_first_hit"] = json_num(count > 0 ? sum / double(count)
                                                 : std::nan(""));
    entry["sqrt_d_levels"] = k;
    entry["p_no_hit"] = json_num(count > 0 ? double(missed) / double(count)
                                           : std::nan(""));
    entry["exact_p_no_hit"] = json_num(exact);
    per_d.push_back(entry);
  }
  json summary;
  summary["kind"] = "xor";
  summary["replicates"] = reps;
  summary["per_d"] = per_d;
  write_summary(out_dir, summary);
}

// ---------------------------------------------------------------------------
// diagnose: structural constants of the population problem.

void run_diagnose(const json& cfg, const std::filesystem::path& out_dir,
                  const SeedSpec&, int) {
  const Problem prob = parse_problem(cfg.at("problem"));
  const json& dc = cfg.at("diagnose");
  check_keys(dc, "diagnose", {}, {"q"});

  const PopulationProblem pb(prob.dist, prob.target);
  DiagnosticsReport report = diagnose(pb);
  if (dc.contains("q")) {
    const std::int64_t q = get_int(dc, "diagnose", "q");
    if (q < 1 || q > pb.d()) bad("diagnose.q: expected 1 <= q <= d");
    report.zeta = density_lower_bound(pb, static_cast<int>(q));
    report.zeta_q = static_cast<int>(q);
    if (report.zeta <= 0) {
      bool have = false;
      for (const std::string& w : report.warnings)
        have = have || w == "density lower bound is 0";
      if (!have) report.warnings.push_back("density lower bound is 0");
    }
  }

  std::string csv = "key,value\n";
  const auto add = [&](const char* key, double v) {
    csv += key;
    csv += ',';
    csv += fmt_double(v);
    csv += '\n';
  };
  add("C_submodular", report.c_submodular);
  add("C_diminishing", report.c_diminishing);
  add("beta_split", report.beta_split);
  add("beta_partition", report.beta_partition);
  add("zeta", report.zeta);
  add("zeta_q", double(report.zeta_q));
  write_text_file(out_dir / "rows.csv", csv);

  json relevant = json::array();
  for (int c : report.relevant) relevant.push_back(c + 1);
  json summary;
  summary["kind"] = "diagnose";
  summary["C_submodular"] = json_num(report.c_submodular);
  summary["C_diminishing"] = json_num(report.c_diminishing);
  summary["beta_split"] = json_num(report.beta_split);
  summary["beta_partition"] = json_num(report.beta_partition);
  summary["zeta"] = json_num(report.zeta);
  summary["zeta_q"] = report.zeta_q;
  summary["relevant_set"] = relevant;
  summary["warnings"] = report.warnings;
  write_summary(out_dir, summary);
}

// ---------------------------------------------------------------------------
// oracle_table: exact variance functionals for every small split set.

void run_oracle_table(const json& cfg, const std::filesystem::path& out_dir,
                      const SeedSpec&, int) {
  const Problem prob = parse_problem(cfg.at("problem"));
  const json& oc = cfg.at("oracle_table");
  check_keys(oc, "oracle_table", {"max_size"}, {"coords"});
  const std::int64_t max_size = get_int(oc, "oracle_table", "max_size");
  if (max_size < 0 || max_size > 4)
    bad("oracle_table.max_size: expected 0 <= max_size <= 4");

  std::vector<int> coords;
  if (oc.contains("coords")) {
    for (std::int64_t c : get_int_array(oc, "oracle_table", "coords"))
      coords.push_back(to_coord(c, prob.dist.d, "oracle_table.coords"));
    std::vector<int> sorted = coords;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      bad("oracle_table.coords: duplicate coordinate");
  } else {
    coords.resize(prob.dist.d);
    for (int c = 0; c < prob.dist.d; ++c) coords[c] = c;
  }

  const std::int64_t m = static_cast<std::int64_t>(coords.size());
  std::int64_t total_rows = 0;
  for (std::int64_t k = 0; k <= std::min<std::int64_t>(max_size, m); ++k) {
    std::int64_t binom = 1;
    for (std::int64_t i = 0; i < k; ++i) binom = binom * (m - i) / (i + 1);
    total_rows += binom;
    if (total_rows > 200'000)
      bad("oracle_table: more than 200000 rows; restrict coords or max_size");
  }

  const PopulationProblem pb(prob.dist, prob.target);
  std::string csv = "split_set,vbar,lbar\n";
  std::int64_t emitted = 0;
  for (std::int64_t k = 0; k <= std::min<std::int64_t>(max_size, m); ++k) {
    // Size-k index combinations in lexicographic order over `coords`.
    std::vector<std::int64_t> pick(k);
    for (std::int64_t i = 0; i < k; ++i) pick[i] = i;
    while (true) {
      SplitSet S;
      std::string label;
      for (std::int64_t i = 0; i < k; ++i) {
        S.push_back(coords[pick[i]]);
        if (i > 0) label += '|';
        label += fmt_int(coords[pick[i]] + 1);
      }
      const double v = vbar(pb, S);
      csv += label;
      csv += ',';
      csv += fmt_double(v);
      csv += ',';
      csv += fmt_double(pb.mean_m_sq() - v);
      csv += '\n';
      ++emitted;
      if (k == 0) break;
      std::int64_t i = k - 1;
      while (i >= 0 && pick[i] == m - k + i) --i;
      if (i < 0) break;
      ++pick[i];
      for (std::int64_t j = i + 1; j < k; ++j) pick[j] = pick[j - 1] + 1;
    }
  }
  write_text_file(out_dir / "rows.csv", csv);

  json summary;
  summary["kind"] = "oracle_table";
  summary["num_rows"] = emitted;
  summary["mean_m_sq"] = json_num(pb.mean_m_sq());
  write_summary(out_dir, summary);
}

}  // namespace

Problem parse_problem_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    bad(std::string("problem: invalid JSON: ") + e.what());
  }
  return parse_problem(j);
}

void run_experiment(const std::string& kind, const std::string& config_text,
                    const std::string& out_dir,
                    std::optional<std::uint64_t> seed_override,
                    std::optional<int> threads_override) {
  json cfg;
  try {
    cfg = json::parse(config_text);
  } catch (const json::exception& e) {
    bad(std::string("config: invalid JSON: ") + e.what());
  }
  require_object(cfg, "config");

  if (kind == "rate") {
    check_keys(cfg, "config", {"problem", "rate"}, {"seed", "threads"});
  } else if (kind == "coverage") {
    check_keys(cfg, "config", {"problem", "coverage"}, {"seed", "threads"});
  } else if (kind == "xor") {
    check_keys(cfg, "config", {"xor"}, {"seed", "threads"});
  } else if (kind == "diagnose") {
    check_keys(cfg, "config", {"problem", "diagnose"}, {"seed", "threads"});
  } else if (kind == "oracle_table") {
    check_keys(cfg, "config", {"problem", "oracle_table"}, {"seed", "threads"});
  } else {
    bad("unknown experiment kind \"" + kind + "\"");
  }

  SeedSpec seed;
  if (cfg.contains("seed")) {
    const json& s = cfg.at("seed");
    if (!s.is_number_integer() || s.get<std::int64_t>() < 0)
      bad("config.seed: expected a nonnegative integer");
    seed.master_seed = s.get<std::uint64_t>();
  }
  if (seed_override) seed.master_seed = *seed_override;

  int threads = 1;
  if (cfg.contains("threads")) {
    const std::int64_t t = get_int(cfg, "config", "threads");
    if (t < 1 || t > 1024) bad("config.threads: expected 1 <= threads <= 1024");
    threads = static_cast<int>(t);
  }
  if (threads_override) {
    if (*threads_override < 1) bad("threads override must be >= 1");
    threads = *threads_override;
  }

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);

  try {
    if (kind == "rate") run_rate(cfg, dir, seed, threads);
    else if (kind == "coverage") run_coverage(cfg, dir, seed, threads);
    else if (kind == "xor") run_xor(cfg, dir, seed, threads);
    else if (kind == "diagnose") run_diagnose(cfg, dir, seed, threads);
    else run_oracle_table(cfg, dir, seed, threads);
  } catch (const json::exception& e) {
    bad(std::string("config: ") + e.what());
  }
}

}  // namespace cart
