// SPDX-License-Identifier: MIT
#pragma once

// Empirical variance-reduction criteria: the sample analogues of vbar and
// vbar_leaf, plus the skip-empty-splits fallback estimator.

#include <cstdint>
#include <vector>

#include "cart/bitmatrix.hpp"
#include "cart/cells.hpp"
#include "cart/data.hpp"

namespace cart {

// Partitions a set of sample rows into equal-x_S classes, refined one
// coordinate at a time. Group ids are dense and assigned in first-appearance
// order over ascending row positions, so the grouping is deterministic.
class Grouper {
 public:
  Grouper(const BitMatrix* x, std::vector<std::int64_t> rows);

  void refine(int coord);

  std::int64_t group_count() const { return group_count_; }
  const std::vector<std::int32_t>& group_ids() const { return gid_; }
  const std::vector<std::int64_t>& rows() const { return rows_; }

  // Per-group mean of y (indexed by original row); sums accumulate in
  // ascending row-position order.
  std::vector<double> group_means(const std::vector<double>& y) const;

 private:
  const BitMatrix* x_;
  std::vector<std::int64_t> rows_;
  std::vector<std::int32_t> gid_;
  std::int64_t group_count_;
  std::vector<std::int32_t> remap_;
};

// V_n(S) = (1/n) Σ_j mean(y over the x_S-class of sample j)².
double empirical_v(const Dataset& data, const SplitSet& S);

// L_n(S) = (1/n) Σ_j y_j² − V_n(S).
double empirical_l(const Dataset& data, const SplitSet& S);

// Mean y over the samples matching x on a maximal prefix-consistent subset
// of S: descend S in order and skip any coordinate whose bit constraint
// would leave zero matching samples. At least the full sample always
// matches, so the result is well defined for n ≥ 1.
double estimate_with_splits(const Dataset& data, const SplitSet& S,
                            const BitMatrix& x, std::int64_t row);

// V_n^ℓ(A, i) = Σ_{z∈{0,1}} (N_z/N)·mean(y over A's samples with bit i = z)²;
// an empty subcell contributes 0. Throws when A holds no samples.
double empirical_v_leaf(const Dataset& data, const Cell& A, int coord);

}  // namespace cart
