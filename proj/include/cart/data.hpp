// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cart/bitmatrix.hpp"
#include "cart/rng.hpp"

namespace cart {

// Law of the feature vector on {0,1}^d: independent Bernoulli coordinates,
// optionally with one correlated block K carrying an explicit joint table.
// Correlation confined to |K| <= 20 keeps population functionals exactly
// enumerable.
struct FeatureDistribution {
  enum class Kind { Product, BlockCorrelated };

  Kind kind = Kind::Product;
  int d = 0;
  std::vector<double> p;       // size d; entries for block coords are unused
  std::vector<int> block;      // sorted, distinct, 0-based; empty for Product
  std::vector<double> pi;      // joint table over {0,1}^{|block|}; bit k of the
                               // index is the value of block[k]

  static FeatureDistribution product(int d, double p_all);
  static FeatureDistribution product(std::vector<double> p);
  static FeatureDistribution block_correlated(int d, std::vector<int> block,
                                              std::vector<double> pi,
                                              double p_others);

  void validate() const;
  void sample_row(Rng& rng, BitMatrix& x, std::int64_t row) const;
};

// Exact Pr(x_Q = w).  Product coordinates factor; the block part sums pi over
// completions consistent with w.  Enumeration cap |Q ∪ K| <= 25.
double marginal_probability(const FeatureDistribution& dist,
                            const std::vector<int>& coords,
                            const std::vector<int>& bits);

// m(x) = h(x_R): a function of r coordinates given by a truth table of
// 2^r values in [-1/2, 1/2].  Bit k of the table index is the value of
// coordinate relevant[k].
struct SparseTarget {
  int d = 0;
  std::vector<int> relevant;   // ordered, distinct, 0-based
  std::vector<double> table;   // size 2^r

  void validate() const;

  double eval(const BitMatrix& x, std::int64_t row) const {
    std::size_t idx = 0;
    for (std::size_t k = 0; k < relevant.size(); ++k)
      idx |= static_cast<std::size_t>(x.get(row, relevant[k])) << k;
    return table[idx];
  }

  // Table entry for an assignment of the relevant coordinates given as bits
  // in `relevant` order.
  double eval_bits(std::size_t idx) const { return table[idx]; }
};

// Zero-mean homoskedastic noise with support in [-1/2, 1/2].
struct NoiseModel {
  enum class Kind { None, Uniform, Rademacher };

  Kind kind = Kind::None;
  double eps = 0.0;  // halfwidth (Uniform) or magnitude (Rademacher)

  void validate() const;
  double variance() const;
  double sample(Rng& rng) const;
};

struct Dataset {
  int d = 0;
  std::int64_t n = 0;
  BitMatrix x;
  std::vector<double> y;

  void write_csv(std::ostream& os) const;
  static Dataset read_csv(std::istream& is);
};

// Each row i.i.d.: x from dist, y = m(x) + eps.  Deterministic given seed.
Dataset sample_dataset(const FeatureDistribution& dist,
                       const SparseTarget& target, const NoiseModel& noise,
                       std::int64_t n, const SeedSpec& seed);

// Uniformly random partition into parts of sizes ceil(n/2) (structure) and
// floor(n/2) (estimation).
std::pair<Dataset, Dataset> split_honest_halves(const Dataset& data,
                                                const SeedSpec& seed);

}  // namespace cart
