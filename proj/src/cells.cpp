// SPDX-License-Identifier: MIT
#include "cart/cells.hpp"

#include <algorithm>
#include <stdexcept>

namespace cart {

void validate_split_set(const SplitSet& S, int d) {
  for (int c : S)
    if (c < 0 || c >= d)
      throw std::invalid_argument("split coordinate out of range");
  SplitSet sorted = S;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("split set must have distinct coordinates");
}

Cell Cell::child(int coord, int bit) const {
  if (coord < 0 || coord >= d) throw std::invalid_argument("coordinate out of range");
  if (fixes(coord)) throw std::invalid_argument("coordinate already fixed in cell");
  Cell c = *this;
  auto it = std::lower_bound(
      c.fixed.begin(), c.fixed.end(), coord,
      [](const std::pair<int, int>& e, int v) { return e.first < v; });
  c.fixed.insert(it, {coord, bit});
  return c;
}

bool Cell::subset_of(const Cell& outer) const {
  for (const auto& [c, b] : outer.fixed) {
    if (bit_of(c) != b) return false;
  }
  return true;
}

bool Cell::disjoint_from(const Cell& other) const {
  // Both lists are sorted by coordinate.
  std::size_t i = 0, j = 0;
  while (i < fixed.size() && j < other.fixed.size()) {
    if (fixed[i].first < other.fixed[j].first) {
      ++i;
    } else if (fixed[i].first > other.fixed[j].first) {
      ++j;
    } else {
      if (fixed[i].second != other.fixed[j].second) return true;
      ++i;
      ++j;
    }
  }
  return false;
}

bool Partition::is_valid() const {
  if (cells.empty()) return false;
  // unsigned __int128 holds sums of 2^{120-k} without overflow for the cell
  // counts reachable here.
  unsigned __int128 mass = 0;
  const int kScale = 120;
  for (const Cell& a : cells) {
    const int k = static_cast<int>(a.fixed.size());
    if (k > kScale) return false;
    mass += static_cast<unsigned __int128>(1) << (kScale - k);
  }
  if (mass != static_cast<unsigned __int128>(1) << kScale) return false;
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (std::size_t j = i + 1; j < cells.size(); ++j)
      if (!cells[i].disjoint_from(cells[j])) return false;
  return true;
}

bool Partition::refines(const Partition& coarser) const {
  for (const Cell& a : cells) {
    bool inside = false;
    for (const Cell& b : coarser.cells) {
      if (a.subset_of(b)) {
        inside = true;
        break;
      }
    }
    if (!inside) return false;
  }
  return true;
}

int Partition::locate(const BitMatrix& x, std::int64_t row) const {
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (cells[i].contains_row(x, row)) return static_cast<int>(i);
  return -1;
}

}  // namespace cart
