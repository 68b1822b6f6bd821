// SPDX-License-Identifier: MIT
#pragma once

// Greedy regression trees over binary features: level-split construction
// (one coordinate per depth level) and per-cell Breiman construction, with
// optional honest sample splitting.

#include <cstdint>
#include <string>
#include <vector>

#include "cart/cells.hpp"
#include "cart/data.hpp"
#include "cart/rng.hpp"

namespace cart {

enum class TreeVariant { LevelSplit, Breiman };

struct BuildConfig {
  TreeVariant variant = TreeVariant::Breiman;
  bool honest = true;
  // Level budget (depth) for LevelSplit, leaf budget for Breiman.  Ignored
  // when fully_grown is set.
  std::int64_t budget = 0;
  // Grow while a leaf still holds >= 4 gating points and a usable split
  // exists; yields 1-3 gating points per leaf where duplicates permit.
  bool fully_grown = false;
  SeedSpec seed{};
  double tie_tolerance = 1e-12;
};

struct TreeNode {
  int coord = -1;  // split coordinate; -1 marks a leaf
  double value = 0.0;
  std::int64_t n_gating = 0;
  std::int64_t n_estimation = 0;
  std::int32_t child0 = -1;
  std::int32_t child1 = -1;

  bool is_leaf() const { return coord < 0; }
};

struct Tree {
  TreeVariant variant = TreeVariant::Breiman;
  bool honest = false;
  int d = 0;
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  SplitSet split_order;         // LevelSplit only: the coordinate per level

  double predict(const BitMatrix& x, std::int64_t row) const;

  // One cell per leaf, in preorder (bit-0 child first).
  Partition to_partition() const;

  // JSON document with nodes in preorder and 1-based coordinates; parsing
  // it back reproduces the tree exactly.
  std::string to_json() const;
  static Tree from_json(const std::string& text);
};

// Builds a tree per config.  Honest construction halves the data: split
// selection reads the structure half, while leaf gating and leaf values use
// only the estimation half (whose labels the structure search never sees).
Tree build_tree(const Dataset& data, const BuildConfig& config);

}  // namespace cart
