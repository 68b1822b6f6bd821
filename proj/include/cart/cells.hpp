// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>
#include <vector>

#include "cart/bitmatrix.hpp"

namespace cart {

// Ordered list of distinct coordinates; order records the level at which each
// coordinate was chosen.
using SplitSet = std::vector<int>;

// Throws std::invalid_argument unless all coordinates are distinct and lie
// in [0, d).
void validate_split_set(const SplitSet& S, int d);

// Partial assignment on {0,1}^d: constrained coordinates carry a fixed bit,
// absent coordinates are free.  Every partial assignment is nonempty as a
// subset of {0,1}^d.
struct Cell {
  int d = 0;
  // Sorted by coordinate; each entry (coord, bit).
  std::vector<std::pair<int, int>> fixed;

  static Cell root(int d) { return Cell{d, {}}; }

  int bit_of(int coord) const {
    for (const auto& [c, b] : fixed)
      if (c == coord) return b;
    return -1;
  }
  bool fixes(int coord) const { return bit_of(coord) >= 0; }

  // Subcell with one more coordinate pinned.
  Cell child(int coord, int bit) const;

  bool contains_row(const BitMatrix& x, std::int64_t row) const {
    for (const auto& [c, b] : fixed)
      if (x.get(row, c) != b) return false;
    return true;
  }

  // True iff this cell is a subset of `outer`, i.e. every constraint of
  // `outer` is present here with the same bit.
  bool subset_of(const Cell& outer) const;

  // True iff the two cells share no point: some coordinate is fixed by both
  // with opposite bits.
  bool disjoint_from(const Cell& other) const;

  bool operator==(const Cell& o) const { return d == o.d && fixed == o.fixed; }
};

struct Partition {
  std::vector<Cell> cells;

  // Pairwise disjointness plus an exact dyadic mass count: disjoint cells
  // whose 2^{-|fixed|} masses sum to 1 under the uniform measure cover the
  // cube.  Requires every cell to fix at most 120 coordinates.
  bool is_valid() const;

  // True iff every cell here lies inside some cell of `coarser`.
  bool refines(const Partition& coarser) const;

  // Index of the cell containing the given row; -1 if none (invalid input
  // for a valid partition).
  int locate(const BitMatrix& x, std::int64_t row) const;
};

}  // namespace cart
