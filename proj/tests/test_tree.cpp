// SPDX-License-Identifier: MIT
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cart/tree.hpp"

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

Dataset sparse_signal_dataset(Rng& rng, int d, std::int64_t n, int coord,
                              double noise_halfwidth) {
  Dataset data = random_dataset(rng, d, n);
  for (std::int64_t i = 0; i < n; ++i) {
    const double m = data.x.get(i, coord) ? 0.5 : -0.5;
    const double eps = noise_halfwidth * (2.0 * rng.next_double() - 1.0);
    data.y[static_cast<std::size_t>(i)] = m + eps;
  }
  return data;
}

// Leaf node ids in preorder with the bit-0 child first; parallels the cell
// order of Tree::to_partition.
std::vector<std::size_t> preorder_leaves(const Tree& tree) {
  std::vector<std::size_t> out;
  std::vector<std::int32_t> stack{0};
  while (!stack.empty()) {
    const std::int32_t id = stack.back();
    stack.pop_back();
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
    if (node.is_leaf()) {
      out.push_back(static_cast<std::size_t>(id));
    } else {
      stack.push_back(node.child1);
      stack.push_back(node.child0);
    }
  }
  return out;
}

void check_counts_consistent(const Tree& tree) {
  for (const TreeNode& node : tree.nodes) {
    if (node.is_leaf()) {
      CHECK(node.n_gating >= 1);
    } else {
      const TreeNode& c0 = tree.nodes[static_cast<std::size_t>(node.child0)];
      const TreeNode& c1 = tree.nodes[static_cast<std::size_t>(node.child1)];
      CHECK(c0.n_gating + c1.n_gating == node.n_gating);
      CHECK(c0.n_gating >= 1);
      CHECK(c1.n_gating >= 1);
    }
    CHECK(node.n_estimation == node.n_gating);
  }
}

}  // namespace

TEST_CASE("level split recovers a one-sparse signal exactly") {
  Rng rng(SeedSpec{60}, "tree-data");
  const Dataset data = sparse_signal_dataset(rng, 6, 512, 2, 0.0);
  BuildConfig cfg;
  cfg.variant = TreeVariant::LevelSplit;
  cfg.honest = true;
  cfg.budget = 1;
  cfg.seed = SeedSpec{61};
  const Tree tree = build_tree(data, cfg);

  REQUIRE(tree.split_order.size() == 1);
  CHECK(tree.split_order[0] == 2);
  CHECK(tree.variant == TreeVariant::LevelSplit);
  CHECK(tree.honest);
  CHECK(tree.d == 6);
  REQUIRE(tree.nodes.size() == 3);
  CHECK(tree.nodes[0].coord == 2);

  BitMatrix q(1, 6);
  CHECK(tree.predict(q, 0) == doctest::Approx(-0.5));
  q.set(0, 2, 1);
  CHECK(tree.predict(q, 0) == doctest::Approx(0.5));
  check_counts_consistent(tree);
}

TEST_CASE("breiman recovers a one-sparse signal at the root") {
  Rng rng(SeedSpec{62}, "tree-data");
  const Dataset data = sparse_signal_dataset(rng, 6, 2048, 4, 0.1);
  BuildConfig cfg;
  cfg.variant = TreeVariant::Breiman;
  cfg.honest = true;
  cfg.budget = 2;
  cfg.seed = SeedSpec{63};
  const Tree tree = build_tree(data, cfg);

  REQUIRE(tree.nodes.size() == 3);
  CHECK(tree.nodes[0].coord == 4);
  CHECK(tree.split_order.empty());
  BitMatrix q(1, 6);
  CHECK(tree.predict(q, 0) == doctest::Approx(-0.5).epsilon(0.05));
  q.set(0, 4, 1);
  CHECK(tree.predict(q, 0) == doctest::Approx(0.5).epsilon(0.05));
  check_counts_consistent(tree);
}

TEST_CASE("budget zero and budget one produce a single leaf") {
  Rng rng(SeedSpec{64}, "tree-data");
  const Dataset data = random_dataset(rng, 4, 40);
  double mean = 0.0;
  for (double v : data.y) mean += v;
  mean /= static_cast<double>(data.n);

  BuildConfig level;
  level.variant = TreeVariant::LevelSplit;
  level.honest = false;
  level.budget = 0;
  const Tree t0 = build_tree(data, level);
  REQUIRE(t0.nodes.size() == 1);
  CHECK(t0.nodes[0].value == doctest::Approx(mean));
  CHECK(t0.nodes[0].n_gating == 40);

  BuildConfig breiman;
  breiman.variant = TreeVariant::Breiman;
  breiman.honest = false;
  breiman.budget = 1;
  const Tree t1 = build_tree(data, breiman);
  REQUIRE(t1.nodes.size() == 1);
  CHECK(t1.nodes[0].value == doctest::Approx(mean));
}

TEST_CASE("honest construction sizes the halves deterministically") {
  Rng rng(SeedSpec{65}, "tree-data");
  const Dataset data = random_dataset(rng, 4, 101);
  BuildConfig cfg;
  cfg.variant = TreeVariant::Breiman;
  cfg.honest = true;
  cfg.budget = 1;
  cfg.seed = SeedSpec{66};
  const Tree tree = build_tree(data, cfg);
  // Estimation half takes floor(n/2); it supplies gating and leaf labels.
  CHECK(tree.nodes[0].n_gating == 50);
}

TEST_CASE("honest structure ignores estimation labels") {
  // The half assignment depends only on the seed, so rewriting y on the
  // estimation rows must reproduce the identical split structure.
  Rng rng(SeedSpec{67}, "tree-data");
  const int d = 5;
  const std::int64_t n = 60;
  Dataset data = random_dataset(rng, d, n);
  for (std::int64_t i = 0; i < n; ++i)
    data.y[static_cast<std::size_t>(i)] = static_cast<double>(i);
  const SeedSpec build_seed{68};
  const auto halves = split_honest_halves(data, build_seed);
  std::vector<std::int64_t> estimation_rows;
  for (double v : halves.second.y)
    estimation_rows.push_back(static_cast<std::int64_t>(v));

  Dataset base = data;
  Rng noise(SeedSpec{69}, "labels");
  for (std::int64_t i = 0; i < n; ++i)
    base.y[static_cast<std::size_t>(i)] = noise.next_double() - 0.5;

  for (TreeVariant variant :
       {TreeVariant::LevelSplit, TreeVariant::Breiman}) {
    BuildConfig cfg;
    cfg.variant = variant;
    cfg.honest = true;
    cfg.budget = variant == TreeVariant::LevelSplit ? 3 : 8;
    cfg.seed = build_seed;
    const Tree ref = build_tree(base, cfg);

    for (int rep = 0; rep < 20; ++rep) {
      Dataset perturbed = base;
      for (std::int64_t row : estimation_rows)
        perturbed.y[static_cast<std::size_t>(row)] = noise.next_double() - 0.5;
      const Tree got = build_tree(perturbed, cfg);
      REQUIRE(got.nodes.size() == ref.nodes.size());
      CHECK(got.split_order == ref.split_order);
      for (std::size_t k = 0; k < got.nodes.size(); ++k) {
        CHECK(got.nodes[k].coord == ref.nodes[k].coord);
        CHECK(got.nodes[k].child0 == ref.nodes[k].child0);
        CHECK(got.nodes[k].child1 == ref.nodes[k].child1);
        CHECK(got.nodes[k].n_gating == ref.nodes[k].n_gating);
      }
    }
  }
}

TEST_CASE("level split applies one coordinate per level to passing leaves") {
  Rng rng(SeedSpec{70}, "tree-data");
  const Dataset data = random_dataset(rng, 5, 400);
  BuildConfig cfg;
  cfg.variant = TreeVariant::LevelSplit;
  cfg.honest = false;
  cfg.budget = 2;
  cfg.seed = SeedSpec{71};
  const Tree tree = build_tree(data, cfg);

  REQUIRE(tree.split_order.size() == 2);
  CHECK(tree.split_order[0] != tree.split_order[1]);
  // With 400 samples every leaf passes the gating rule, so depth aligns
  // with level.
  REQUIRE(tree.nodes.size() == 7);
  CHECK(tree.nodes[0].coord == tree.split_order[0]);
  const auto& c0 = tree.nodes[static_cast<std::size_t>(tree.nodes[0].child0)];
  const auto& c1 = tree.nodes[static_cast<std::size_t>(tree.nodes[0].child1)];
  CHECK(c0.coord == tree.split_order[1]);
  CHECK(c1.coord == tree.split_order[1]);
  // Every split coordinate belongs to the level list.
  for (const TreeNode& node : tree.nodes)
    if (!node.is_leaf())
      CHECK(std::find(tree.split_order.begin(), tree.split_order.end(),
                      node.coord) != tree.split_order.end());
  check_counts_consistent(tree);
}

TEST_CASE("fully grown trees stop at small or unsplittable leaves") {
  Rng rng(SeedSpec{72}, "tree-data");
  const Dataset data = random_dataset(rng, 8, 300);
  for (TreeVariant variant :
       {TreeVariant::LevelSplit, TreeVariant::Breiman}) {
    BuildConfig cfg;
    cfg.variant = variant;
    cfg.honest = false;
    cfg.fully_grown = true;
    cfg.seed = SeedSpec{73};
    const Tree tree = build_tree(data, cfg);
    check_counts_consistent(tree);

    const Partition P = tree.to_partition();
    CHECK(P.is_valid());
    const auto leaves = preorder_leaves(tree);
    REQUIRE(leaves.size() == P.cells.size());
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      const TreeNode& node = tree.nodes[leaves[k]];
      if (node.n_gating >= 4) {
        // Only permissible when no unfixed coordinate separates the leaf's
        // samples (dishonest build: gating rows are the full data).
        const Cell& cell = P.cells[k];
        for (int c = 0; c < data.d; ++c) {
          if (cell.fixes(c)) continue;
          int ones = 0, total = 0;
          for (std::int64_t i = 0; i < data.n; ++i) {
            if (!cell.contains_row(data.x, i)) continue;
            ++total;
            ones += data.x.get(i, c);
          }
          CHECK((ones == 0 || ones == total));
        }
      }
    }
  }
}

TEST_CASE("prediction agrees with the partition plus leaf values") {
  Rng rng(SeedSpec{74}, "tree-data");
  const Dataset data = random_dataset(rng, 6, 200);
  for (TreeVariant variant :
       {TreeVariant::LevelSplit, TreeVariant::Breiman}) {
    BuildConfig cfg;
    cfg.variant = variant;
    cfg.honest = true;
    cfg.budget = variant == TreeVariant::LevelSplit ? 3 : 6;
    cfg.seed = SeedSpec{75};
    const Tree tree = build_tree(data, cfg);
    const Partition P = tree.to_partition();
    CHECK(P.is_valid());
    const auto leaves = preorder_leaves(tree);
    REQUIRE(leaves.size() == P.cells.size());

    BitMatrix q(1, 6);
    for (int rep = 0; rep < 50; ++rep) {
      for (int c = 0; c < 6; ++c)
        q.set(0, c, rng.next_bernoulli(0.5) ? 1 : 0);
      const int idx = P.locate(q, 0);
      REQUIRE(idx >= 0);
      CHECK(tree.predict(q, 0) ==
            tree.nodes[leaves[static_cast<std::size_t>(idx)]].value);
    }
  }
}

TEST_CASE("same configuration and seed reproduce the identical tree") {
  Rng rng(SeedSpec{76}, "tree-data");
  const Dataset data = random_dataset(rng, 5, 80);
  BuildConfig cfg;
  cfg.variant = TreeVariant::Breiman;
  cfg.honest = true;
  cfg.fully_grown = true;
  cfg.seed = SeedSpec{77};
  const Tree a = build_tree(data, cfg);
  const Tree b = build_tree(data, cfg);
  CHECK(a.to_json() == b.to_json());
}

TEST_CASE("tree json round trip is exact") {
  Rng rng(SeedSpec{78}, "tree-data");
  const Dataset data = random_dataset(rng, 5, 64);
  for (TreeVariant variant :
       {TreeVariant::LevelSplit, TreeVariant::Breiman}) {
    BuildConfig cfg;
    cfg.variant = variant;
    cfg.honest = variant == TreeVariant::Breiman;
    cfg.budget = 3;
    cfg.seed = SeedSpec{79};
    const Tree tree = build_tree(data, cfg);
    const std::string text = tree.to_json();
    const Tree back = Tree::from_json(text);
    CHECK(back.variant == tree.variant);
    CHECK(back.honest == tree.honest);
    CHECK(back.d == tree.d);
    CHECK(back.split_order == tree.split_order);
    REQUIRE(back.nodes.size() == tree.nodes.size());
    CHECK(back.to_json() == text);

    BitMatrix q(1, 5);
    for (int rep = 0; rep < 32; ++rep) {
      for (int c = 0; c < 5; ++c)
        q.set(0, c, rng.next_bernoulli(0.5) ? 1 : 0);
      CHECK(back.predict(q, 0) == tree.predict(q, 0));
    }
  }
}

TEST_CASE("tree json parsing rejects malformed documents") {
  CHECK_THROWS_AS(
      Tree::from_json(R"({"variant":"mystery","honest":false,"d":2,)"
                      R"("split_order":[],"nodes":[{"value":0.0,)"
                      R"("n_gating":1,"n_estimation":1}]})"),
      std::invalid_argument);
  CHECK_THROWS_AS(
      Tree::from_json(R"({"variant":"breiman","honest":false,"d":0,)"
                      R"("split_order":[],"nodes":[{"value":0.0,)"
                      R"("n_gating":1,"n_estimation":1}]})"),
      std::invalid_argument);
  CHECK_THROWS_AS(
      Tree::from_json(R"({"variant":"breiman","honest":false,"d":2,)"
                      R"("split_order":[3],"nodes":[{"value":0.0,)"
                      R"("n_gating":1,"n_estimation":1}]})"),
      std::invalid_argument);
  // Interior node whose children are missing.
  CHECK_THROWS_AS(
      Tree::from_json(R"({"variant":"breiman","honest":false,"d":2,)"
                      R"("split_order":[],"nodes":[{"coord":1,)"
                      R"("n_gating":2,"n_estimation":2}]})"),
      std::invalid_argument);
  // Extra node after the preorder walk completes.
  CHECK_THROWS_AS(
      Tree::from_json(R"({"variant":"breiman","honest":false,"d":2,)"
                      R"("split_order":[],"nodes":[{"value":0.0,)"
                      R"("n_gating":1,"n_estimation":1},{"value":1.0,)"
                      R"("n_gating":1,"n_estimation":1}]})"),
      std::invalid_argument);
  // Split coordinate outside [1, d].
  CHECK_THROWS_AS(
      Tree::from_json(R"({"variant":"breiman","honest":false,"d":2,)"
                      R"("split_order":[],"nodes":[{"coord":3,)"
                      R"("n_gating":2,"n_estimation":2},{"value":0.0,)"
                      R"("n_gating":1,"n_estimation":1},{"value":1.0,)"
                      R"("n_gating":1,"n_estimation":1}]})"),
      std::invalid_argument);
}

TEST_CASE("build configuration errors") {
  Rng rng(SeedSpec{80}, "tree-data");
  const Dataset data = random_dataset(rng, 3, 10);

  Dataset empty;
  empty.d = 3;
  empty.n = 0;
  empty.x = BitMatrix(0, 3);
  BuildConfig cfg;
  CHECK_THROWS_AS(build_tree(empty, cfg), std::invalid_argument);

  Dataset single = random_dataset(rng, 3, 1);
  cfg.honest = true;
  cfg.budget = 1;
  CHECK_THROWS_AS(build_tree(single, cfg), std::invalid_argument);
  cfg.honest = false;
  CHECK_NOTHROW(build_tree(single, cfg));

  cfg.variant = TreeVariant::Breiman;
  cfg.budget = 0;
  CHECK_THROWS_AS(build_tree(data, cfg), std::invalid_argument);
  cfg.variant = TreeVariant::LevelSplit;
  cfg.budget = -1;
  CHECK_THROWS_AS(build_tree(data, cfg), std::invalid_argument);
  cfg.budget = 4;
  CHECK_THROWS_AS(build_tree(data, cfg), std::invalid_argument);
  cfg.budget = 3;
  CHECK_NOTHROW(build_tree(data, cfg));
}
