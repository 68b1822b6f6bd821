// SPDX-License-Identifier: MIT
#include "cart/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <limits>
#include <unordered_map>

#include "cart/errors.hpp"

namespace cart {

namespace {

constexpr double kTieTol = 1e-12;
// Gains below this are treated as zero in assumption searches; population
// values are all <= 1 in magnitude so this is far above rounding noise.
constexpr double kGainTol = 1e-14;

}  // namespace

PopulationProblem::PopulationProblem(FeatureDistribution dist,
                                     SparseTarget target)
    : dist_(std::move(dist)), target_(std::move(target)) {
  dist_.validate();
  target_.validate();
  if (dist_.d != target_.d)
    throw std::invalid_argument("distribution/target dimension mismatch");

  live_ = target_.relevant;
  live_.insert(live_.end(), dist_.block.begin(), dist_.block.end());
  std::sort(live_.begin(), live_.end());
  live_.erase(std::unique(live_.begin(), live_.end()), live_.end());
  if (live_.size() > 22) throw cap_error("|R ∪ K| exceeds exactness cap 22");

  live_pos_.assign(static_cast<std::size_t>(dist_.d), -1);
  for (std::size_t k = 0; k < live_.size(); ++k)
    live_pos_[static_cast<std::size_t>(live_[k])] = static_cast<int>(k);

  const std::size_t L = live_.size();
  const std::size_t total = static_cast<std::size_t>(1) << L;
  weight_.resize(total);
  mval_.resize(total);

  // Positions of block coords and relevant coords inside live_.
  std::vector<int> kpos, rpos;
  for (int c : dist_.block) kpos.push_back(live_pos_[static_cast<std::size_t>(c)]);
  for (int c : target_.relevant)
    rpos.push_back(live_pos_[static_cast<std::size_t>(c)]);

  for (std::size_t a = 0; a < total; ++a) {
    double w = 1.0;
    if (!kpos.empty()) {
      std::size_t bidx = 0;
      for (std::size_t j = 0; j < kpos.size(); ++j)
        bidx |= ((a >> kpos[j]) & 1u) << j;
      w = dist_.pi[bidx];
    }
    for (std::size_t k = 0; k < L; ++k) {
      const int coord = live_[k];
      const bool in_block = std::binary_search(dist_.block.begin(),
                                               dist_.block.end(), coord);
      if (in_block) continue;
      const double pc = dist_.p[static_cast<std::size_t>(coord)];
      w *= ((a >> k) & 1u) ? pc : 1.0 - pc;
    }
    std::size_t tidx = 0;
    for (std::size_t j = 0; j < rpos.size(); ++j)
      tidx |= ((a >> rpos[j]) & 1u) << j;
    weight_[a] = w;
    mval_[a] = target_.table.empty() ? 0.0 : target_.table[tidx];
    m1_ += w * mval_[a];
    m2_ += w * mval_[a] * mval_[a];
  }
}

namespace {

// Live-coordinate view of a cell: bit filter (mask, want) over live indices
// plus the number of constrained coordinates outside live.
struct LiveFilter {
  std::size_t mask = 0;
  std::size_t want = 0;
  int off_live = 0;
};

LiveFilter live_filter(const PopulationProblem& pb, const Cell& cell) {
  if (cell.d != pb.d()) throw std::invalid_argument("cell dimension mismatch");
  LiveFilter f;
  for (const auto& [c, b] : cell.fixed) {
    const int pos = pb.live_index(c);
    if (pos >= 0) {
      f.mask |= static_cast<std::size_t>(1) << pos;
      if (b) f.want |= static_cast<std::size_t>(1) << pos;
    } else {
      ++f.off_live;
    }
  }
  if (pb.live().size() + static_cast<std::size_t>(f.off_live) > 25)
    throw cap_error("cell enumeration cap exceeded");
  return f;
}

// Product of Bernoulli factors for constrained coordinates outside live.
double off_live_factor(const PopulationProblem& pb, const Cell& cell) {
  double f = 1.0;
  for (const auto& [c, b] : cell.fixed) {
    if (pb.is_live(c)) continue;
    const double pc = pb.dist().p[static_cast<std::size_t>(c)];
    f *= b ? pc : 1.0 - pc;
  }
  return f;
}

}  // namespace

CellMoments cond_moments(const PopulationProblem& pb, const Cell& cell) {
  const LiveFilter f = live_filter(pb, cell);
  const auto& w = pb.weights();
  const auto& m = pb.target_values();
  double W = 0.0, S1 = 0.0, S2 = 0.0;
  for (std::size_t a = 0; a < w.size(); ++a) {
    if ((a & f.mask) != f.want) continue;
    W += w[a];
    S1 += w[a] * m[a];
    S2 += w[a] * m[a] * m[a];
  }
  CellMoments out;
  out.prob = off_live_factor(pb, cell) * W;
  if (W > 0.0) {
    out.mean = S1 / W;
    out.mean_sq = S2 / W;
  } else {
    out.prob = 0.0;
  }
  return out;
}

double vbar(const PopulationProblem& pb, const SplitSet& S) {
  validate_split_set(S, pb.d());
  // Coordinates independent of m marginalize away exactly, so only
  // S ∩ (R ∪ K) refines the conditional mean.
  std::vector<int> zpos(pb.live().size(), -1);
  int zbits = 0;
  for (int c : S)
    if (pb.is_live(c)) zpos[static_cast<std::size_t>(pb.live_index(c))] = zbits++;
  const auto& w = pb.weights();
  const auto& m = pb.target_values();
  const std::size_t G = static_cast<std::size_t>(1) << zbits;
  std::vector<double> wz(G, 0.0), s1(G, 0.0);
  for (std::size_t a = 0; a < w.size(); ++a) {
    std::size_t z = 0;
    for (std::size_t k = 0; k < zpos.size(); ++k)
      if (zpos[k] >= 0) z |= ((a >> k) & 1u) << zpos[k];
    wz[z] += w[a];
    s1[z] += w[a] * m[a];
  }
  double v = 0.0;
  for (std::size_t z = 0; z < G; ++z) {
    if (wz[z] > 0.0) {
      const double mean = s1[z] / wz[z];
      v += wz[z] * mean * mean;
    }
  }
  return v;
}

double lbar(const PopulationProblem& pb, const SplitSet& S) {
  return pb.mean_m_sq() - vbar(pb, S);
}

double vbar_leaf(const PopulationProblem& pb, const Cell& A,
                 const std::vector<int>& I) {
  validate_split_set(I, pb.d());
  const LiveFilter f = live_filter(pb, A);
  std::vector<int> zpos(pb.live().size(), -1);
  int zbits = 0;
  for (int c : I)
    if (pb.is_live(c)) zpos[static_cast<std::size_t>(pb.live_index(c))] = zbits++;
  const auto& w = pb.weights();
  const auto& m = pb.target_values();
  const std::size_t G = static_cast<std::size_t>(1) << zbits;
  std::vector<double> wz(G, 0.0), s1(G, 0.0);
  double W = 0.0;
  for (std::size_t a = 0; a < w.size(); ++a) {
    if ((a & f.mask) != f.want) continue;
    W += w[a];
    std::size_t z = 0;
    for (std::size_t k = 0; k < zpos.size(); ++k)
      if (zpos[k] >= 0) z |= ((a >> k) & 1u) << zpos[k];
    wz[z] += w[a];
    s1[z] += w[a] * m[a];
  }
  if (!(W > 0.0)) throw std::invalid_argument("zero-mass cell");
  double v = 0.0;
  for (std::size_t z = 0; z < G; ++z) {
    if (wz[z] > 0.0) {
      const double mean = s1[z] / wz[z];
      v += (wz[z] / W) * mean * mean;
    }
  }
  return v;
}

double lbar_leaf(const PopulationProblem& pb, const Cell& A,
                 const std::vector<int>& I) {
  const CellMoments cm = cond_moments(pb, A);
  if (!cm.mean_sq) throw std::invalid_argument("zero-mass cell");
  return *cm.mean_sq - vbar_leaf(pb, A, I);
}

double vbar_partition(const PopulationProblem& pb, const Partition& P) {
  double v = 0.0;
  for (const Cell& a : P.cells) {
    const CellMoments cm = cond_moments(pb, a);
    if (cm.mean) v += cm.prob * (*cm.mean) * (*cm.mean);
  }
  return v;
}

double lbar_partition(const PopulationProblem& pb, const Partition& P) {
  double l = 0.0;
  for (const Cell& a : P.cells) {
    const CellMoments cm = cond_moments(pb, a);
    if (cm.mean)
      l += cm.prob * (*cm.mean_sq - (*cm.mean) * (*cm.mean));
  }
  return l;
}

int select_level_coordinate(const PopulationProblem& pb, const SplitSet& S,
                            Rng& rng, double tie_tol) {
  std::vector<int> cands;
  std::vector<double> vals;
  // All coordinates outside R ∪ K share one exact value, V̄(S).
  double v_skip = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < pb.d(); ++i) {
    if (std::find(S.begin(), S.end(), i) != S.end()) continue;
    double v;
    if (pb.is_live(i)) {
      SplitSet Si = S;
      Si.push_back(i);
      v = vbar(pb, Si);
    } else {
      if (std::isnan(v_skip)) v_skip = vbar(pb, S);
      v = v_skip;
    }
    cands.push_back(i);
    vals.push_back(v);
  }
  if (cands.empty())
    throw std::invalid_argument("no coordinate left to select");
  return pick_max_with_ties(cands, vals, rng, tie_tol);
}

PopulationLevelSplitResult population_level_split(const PopulationProblem& pb,
                                                  int levels,
                                                  const SeedSpec& tie_seed) {
  if (levels < 0 || levels > pb.d())
    throw std::invalid_argument("level budget must lie in [0, d]");
  PopulationLevelSplitResult out;
  for (int level = 0; level < levels; ++level) {
    Rng rng(tie_seed, "level", static_cast<std::uint64_t>(level));
    out.splits.push_back(select_level_coordinate(pb, out.splits, rng, kTieTol));
  }
  return out;
}

std::optional<double> PopulationLevelSplitResult::predict(
    const PopulationProblem& pb, const BitMatrix& x, std::int64_t row) const {
  Cell cell = Cell::root(pb.d());
  for (int c : splits)
    if (pb.is_live(c)) cell = cell.child(c, x.get(row, c));
  const CellMoments cm = cond_moments(pb, cell);
  return cm.mean;
}

Partition PopulationLevelSplitResult::to_partition(int d) const {
  if (splits.size() > 20) throw cap_error("split set too large to materialize");
  Partition P;
  const std::size_t total = static_cast<std::size_t>(1) << splits.size();
  for (std::size_t z = 0; z < total; ++z) {
    Cell cell = Cell::root(d);
    for (std::size_t k = 0; k < splits.size(); ++k)
      cell = cell.child(splits[k], static_cast<int>((z >> k) & 1u));
    P.cells.push_back(std::move(cell));
  }
  return P;
}

PopulationTreeResult population_breiman(const PopulationProblem& pb,
                                        std::int64_t t_leaves,
                                        const SeedSpec& tie_seed) {
  if (t_leaves < 1) throw std::invalid_argument("leaf budget must be >= 1");
  struct QCell {
    Cell cell;
    std::uint64_t id;
  };
  std::deque<QCell> queue;
  queue.push_back({Cell::root(pb.d()), 0});
  std::uint64_t next_id = 1;
  std::int64_t leaves = 1;
  std::vector<Cell> final_cells;

  while (!queue.empty() && leaves < t_leaves) {
    QCell qc = std::move(queue.front());
    queue.pop_front();
    std::vector<int> cands;
    for (int i = 0; i < pb.d(); ++i)
      if (!qc.cell.fixes(i)) cands.push_back(i);
    if (cands.empty()) {
      final_cells.push_back(std::move(qc.cell));
      continue;
    }
    const CellMoments cm = cond_moments(pb, qc.cell);
    std::vector<double> vals(cands.size(), 0.0);
    if (cm.mean) {
      // Coordinates outside R ∪ K cannot move the conditional mean; they all
      // score V̄_ℓ(A, ∅).
      double v_skip = std::numeric_limits<double>::quiet_NaN();
      for (std::size_t k = 0; k < cands.size(); ++k) {
        if (pb.is_live(cands[k])) {
          vals[k] = vbar_leaf(pb, qc.cell, {cands[k]});
        } else {
          if (std::isnan(v_skip)) v_skip = vbar_leaf(pb, qc.cell, {});
          vals[k] = v_skip;
        }
      }
    }
    Rng rng(tie_seed, "node", qc.id);
    const int coord = pick_max_with_ties(cands, vals, rng, kTieTol);
    queue.push_back({qc.cell.child(coord, 0), next_id++});
    queue.push_back({qc.cell.child(coord, 1), next_id++});
    ++leaves;
  }
  for (auto& qc : queue) final_cells.push_back(std::move(qc.cell));

  PopulationTreeResult out;
  out.partition.cells = std::move(final_cells);
  out.leaf_values.reserve(out.partition.cells.size());
  for (const Cell& a : out.partition.cells)
    out.leaf_values.push_back(cond_moments(pb, a).mean);
  return out;
}

std::optional<double> PopulationTreeResult::predict(const BitMatrix& x,
                                                    std::int64_t row) const {
  const int idx = partition.locate(x, row);
  if (idx < 0) return std::nullopt;
  return leaf_values[static_cast<std::size_t>(idx)];
}

std::vector<int> relevant_set(const PopulationProblem& pb, const SplitSet& S,
                              double eta) {
  if (eta < 0.0) throw std::invalid_argument("eta must be >= 0");
  validate_split_set(S, pb.d());
  const double v0 = vbar(pb, S);
  std::vector<int> out;
  for (int i = 0; i < pb.d(); ++i) {
    if (std::find(S.begin(), S.end(), i) != S.end()) continue;
    if (!pb.is_live(i)) continue;  // gain is exactly 0
    SplitSet Si = S;
    Si.push_back(i);
    if (vbar(pb, Si) - v0 > eta) out.push_back(i);
  }
  return out;
}

std::vector<int> leaf_relevant_set(const PopulationProblem& pb, const Cell& A,
                                   double eta) {
  if (eta < 0.0) throw std::invalid_argument("eta must be >= 0");
  const double v0 = vbar_leaf(pb, A, {});
  std::vector<int> out;
  for (int i = 0; i < pb.d(); ++i) {
    if (!pb.is_live(i) || A.fixes(i)) continue;
    if (vbar_leaf(pb, A, {i}) - v0 > eta) out.push_back(i);
  }
  return out;
}

namespace {

// Shared scaffolding for the assumption searches: the searched coordinate
// family is R ∪ K plus one representative coordinate outside it (off-family
// coordinates are exchangeable, so one stands for all).
struct SearchFamily {
  std::vector<int> coords;          // family, sorted
  std::size_t r_mask = 0;           // positions of relevant coords
  std::size_t irrelevant_mask = 0;  // positions of coords outside R
};

SearchFamily make_family(const PopulationProblem& pb, std::size_t max_size) {
  SearchFamily fam;
  fam.coords = pb.live();
  for (int c = 0; c < pb.d(); ++c) {
    if (!pb.is_live(c)) {
      fam.coords.push_back(c);
      break;
    }
  }
  std::sort(fam.coords.begin(), fam.coords.end());
  if (fam.coords.size() > max_size)
    throw cap_error("assumption search family too large");
  const auto& R = pb.target().relevant;
  for (std::size_t k = 0; k < fam.coords.size(); ++k) {
    const bool rel =
        std::find(R.begin(), R.end(), fam.coords[k]) != R.end();
    if (rel)
      fam.r_mask |= static_cast<std::size_t>(1) << k;
    else
      fam.irrelevant_mask |= static_cast<std::size_t>(1) << k;
  }
  return fam;
}

SplitSet mask_to_splits(const SearchFamily& fam, std::size_t mask) {
  SplitSet S;
  for (std::size_t k = 0; k < fam.coords.size(); ++k)
    if ((mask >> k) & 1u) S.push_back(fam.coords[k]);
  return S;
}

// Lazily memoized V̄ over subsets of the family.
class VbarMemo {
 public:
  VbarMemo(const PopulationProblem& pb, const SearchFamily& fam)
      : pb_(pb), fam_(fam),
        vals_(static_cast<std::size_t>(1) << fam.coords.size(),
              std::numeric_limits<double>::quiet_NaN()) {}

  double operator()(std::size_t mask) {
    double& v = vals_[mask];
    if (std::isnan(v)) v = vbar(pb_, mask_to_splits(fam_, mask));
    return v;
  }

 private:
  const PopulationProblem& pb_;
  const SearchFamily& fam_;
  std::vector<double> vals_;
};

}  // namespace

double submodularity_constant(const PopulationProblem& pb, int scope) {
  const int r = static_cast<int>(pb.target().relevant.size());
  if (scope < 0) scope = 2 * r;
  if (scope > 2 * r)
    throw std::invalid_argument("submodularity scope exceeds 2r");
  const SearchFamily fam = make_family(pb, 12);
  VbarMemo V(pb, fam);
  const std::size_t n = fam.coords.size();
  const std::size_t total = static_cast<std::size_t>(1) << n;
  double c = 1.0;
  for (std::size_t T = 0; T < total; ++T) {
    if (std::popcount(T) > scope) continue;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t ibit = static_cast<std::size_t>(1) << k;
      if (T & ibit) continue;
      const double num = V(T | ibit) - V(T);
      if (num <= kGainTol) continue;
      // Iterate S over proper and improper submasks of T.
      std::size_t S = T;
      while (true) {
        const double den = V(S | ibit) - V(S);
        if (den <= kGainTol) return std::numeric_limits<double>::infinity();
        c = std::max(c, num / den);
        if (S == 0) break;
        S = (S - 1) & T;
      }
    }
  }
  return c;
}

double diminishing_returns_constant(const PopulationProblem& pb, int scope) {
  const int r = static_cast<int>(pb.target().relevant.size());
  if (scope < 0) scope = r;
  if (scope > 2 * r)
    throw std::invalid_argument("diminishing-returns scope exceeds 2r");
  const SearchFamily fam = make_family(pb, 6);
  const std::size_t n = fam.coords.size();
  const std::size_t total = static_cast<std::size_t>(1) << n;

  // Memo for V̄_ℓ(cell, I) keyed by ((fixedmask, bits), Imask).
  std::unordered_map<std::uint64_t, double> memo;
  auto vleaf = [&](std::size_t fixedmask, std::size_t bits,
                   std::size_t imask) {
    const std::uint64_t key =
        (static_cast<std::uint64_t>(fixedmask) << 40) |
        (static_cast<std::uint64_t>(bits) << 20) |
        static_cast<std::uint64_t>(imask);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    Cell cell = Cell::root(pb.d());
    for (std::size_t k = 0; k < n; ++k)
      if ((fixedmask >> k) & 1u)
        cell = cell.child(fam.coords[k], static_cast<int>((bits >> k) & 1u));
    const double v = vbar_leaf(pb, cell, mask_to_splits(fam, imask));
    memo.emplace(key, v);
    return v;
  };
  auto cell_prob = [&](std::size_t fixedmask, std::size_t bits) {
    Cell cell = Cell::root(pb.d());
    for (std::size_t k = 0; k < n; ++k)
      if ((fixedmask >> k) & 1u)
        cell = cell.child(fam.coords[k], static_cast<int>((bits >> k) & 1u));
    return cond_moments(pb, cell).prob;
  };

  double c = 1.0;
  bool any_positive = false;
  for (std::size_t fixedA = 0; fixedA < total; ++fixedA) {
    for (std::size_t bitsA = fixedA;; bitsA = (bitsA - 1) & fixedA) {
      if (cell_prob(fixedA, bitsA) > 0.0) {
        const std::size_t freeA = (total - 1) & ~fixedA;
        // Refinements A' of A: extend by any assignment of a subset of the
        // free coordinates.
        for (std::size_t ext = freeA;; ext = (ext - 1) & freeA) {
          const std::size_t fixedB = fixedA | ext;
          for (std::size_t extbits = ext;; extbits = (extbits - 1) & ext) {
            const std::size_t bitsB = bitsA | extbits;
            if (cell_prob(fixedB, bitsB) > 0.0) {
              for (std::size_t k = 0; k < n; ++k) {
                const std::size_t ibit = static_cast<std::size_t>(1) << k;
                if (fixedB & ibit) continue;
                const double den =
                    vleaf(fixedA, bitsA, ibit) - vleaf(fixedA, bitsA, 0);
                // T ranges over subsets of R not containing i.
                std::size_t tspace = fam.r_mask & ~ibit;
                for (std::size_t T = tspace;; T = (T - 1) & tspace) {
                  if (std::popcount(T) > scope) {
                    if (T == 0) break;
                    continue;
                  }
                  const double num = vleaf(fixedB, bitsB, T | ibit) -
                                     vleaf(fixedB, bitsB, T);
                  if (num > kGainTol) {
                    any_positive = true;
                    if (den <= kGainTol)
                      return std::numeric_limits<double>::infinity();
                    c = std::max(c, num / den);
                  }
                  if (T == 0) break;
                }
              }
            }
            if (extbits == 0) break;
          }
          if (ext == 0) break;
        }
      }
      if (bitsA == 0) break;
    }
  }
  return any_positive ? c : 1.0;
}

double strong_sparsity_margin(const PopulationProblem& pb,
                              bool partition_variant) {
  const auto& R = pb.target().relevant;
  if (R.empty()) return 0.0;
  const SearchFamily fam = make_family(pb, 12);
  const std::size_t n = fam.coords.size();
  if (fam.irrelevant_mask == 0)
    return std::numeric_limits<double>::infinity();  // no irrelevant coords
  const std::size_t total = static_cast<std::size_t>(1) << n;

  double beta = std::numeric_limits<double>::infinity();

  if (!partition_variant) {
    VbarMemo V(pb, fam);
    for (std::size_t T = 0; T < total; ++T) {
      for (std::size_t ki = 0; ki < n; ++ki) {
        const std::size_t ibit = static_cast<std::size_t>(1) << ki;
        if (!(fam.r_mask & ibit) || (T & ibit)) continue;
        for (std::size_t kj = 0; kj < n; ++kj) {
          const std::size_t jbit = static_cast<std::size_t>(1) << kj;
          if (!(fam.irrelevant_mask & jbit) || (T & jbit)) continue;
          const double gain_i = V(T | ibit) - V(T);
          const double gain_j = V(T | jbit) - V(T);
          beta = std::min(beta, gain_i - gain_j);
        }
      }
    }
    return beta;
  }

  // Partition variant: compare leaf gains within every positive-mass cell
  // over the relevant coordinates.
  std::vector<int> rpos;
  for (std::size_t k = 0; k < n; ++k)
    if ((fam.r_mask >> k) & 1u) rpos.push_back(static_cast<int>(k));
  const std::size_t rtotal = static_cast<std::size_t>(1) << rpos.size();
  for (std::size_t fsel = 0; fsel < rtotal; ++fsel) {
    std::size_t fixedmask = 0;
    for (std::size_t j = 0; j < rpos.size(); ++j)
      if ((fsel >> j) & 1u)
        fixedmask |= static_cast<std::size_t>(1) << rpos[j];
    if (fixedmask == fam.r_mask) continue;  // no relevant coordinate left
    for (std::size_t bsel = fixedmask;; bsel = (bsel - 1) & fixedmask) {
      Cell cell = Cell::root(pb.d());
      for (std::size_t k = 0; k < n; ++k)
        if ((fixedmask >> k) & 1u)
          cell = cell.child(fam.coords[k], static_cast<int>((bsel >> k) & 1u));
      if (cond_moments(pb, cell).prob > 0.0) {
        std::unordered_map<std::size_t, double> memo;
        auto VL = [&](std::size_t imask) {
          auto it = memo.find(imask);
          if (it != memo.end()) return it->second;
          const double v = vbar_leaf(pb, cell, mask_to_splits(fam, imask));
          memo.emplace(imask, v);
          return v;
        };
        for (std::size_t T = 0; T < total; ++T) {
          if (T & fixedmask) continue;
          for (std::size_t ki = 0; ki < n; ++ki) {
            const std::size_t ibit = static_cast<std::size_t>(1) << ki;
            if (!(fam.r_mask & ibit) || (T & ibit) || (fixedmask & ibit))
              continue;
            for (std::size_t kj = 0; kj < n; ++kj) {
              const std::size_t jbit = static_cast<std::size_t>(1) << kj;
              if (!(fam.irrelevant_mask & jbit) || (T & jbit)) continue;
              const double gain_i = VL(T | ibit) - VL(T);
              const double gain_j = VL(T | jbit) - VL(T);
              beta = std::min(beta, gain_i - gain_j);
            }
          }
        }
      }
      if (bsel == 0) break;
    }
  }
  return beta;
}

double density_lower_bound(const PopulationProblem& pb, int q) {
  if (q < 1 || q > pb.d())
    throw std::invalid_argument("q must lie in [1, d]");
  if (q > 6) throw cap_error("density search capped at q <= 6");
  std::vector<int> family = pb.live();
  for (int c = 0; c < pb.d() && static_cast<int>(family.size()) < q; ++c)
    if (!pb.is_live(c)) family.push_back(c);
  std::sort(family.begin(), family.end());
  if (family.size() > 25) throw cap_error("density search family too large");

  const int f = static_cast<int>(family.size());
  std::vector<int> comb(static_cast<std::size_t>(q));
  for (int i = 0; i < q; ++i) comb[static_cast<std::size_t>(i)] = i;
  double min_p = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<int> Q;
    for (int i : comb) Q.push_back(family[static_cast<std::size_t>(i)]);
    std::vector<int> bits(static_cast<std::size_t>(q), 0);
    const std::size_t wtotal = static_cast<std::size_t>(1) << q;
    for (std::size_t w = 0; w < wtotal; ++w) {
      for (int i = 0; i < q; ++i)
        bits[static_cast<std::size_t>(i)] = static_cast<int>((w >> i) & 1u);
      min_p = std::min(min_p, marginal_probability(pb.dist(), Q, bits));
    }
    // Next q-combination of [0, f).
    int i = q - 1;
    while (i >= 0 && comb[static_cast<std::size_t>(i)] == f - q + i) --i;
    if (i < 0) break;
    ++comb[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < q; ++j)
      comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
  }
  return std::ldexp(min_p, q);  // 2^q · min
}

double value_diameter(const PopulationProblem& pb, const Cell& A) {
  const LiveFilter f = live_filter(pb, A);
  const auto& w = pb.weights();
  const auto& m = pb.target_values();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < w.size(); ++a) {
    if ((a & f.mask) != f.want || !(w[a] > 0.0)) continue;
    lo = std::min(lo, m[a]);
    hi = std::max(hi, m[a]);
  }
  if (!(hi >= lo)) return 0.0;  // zero-mass cell
  return (hi - lo) * (hi - lo);
}

double partition_value_diameter(const PopulationProblem& pb,
                                const Partition& P) {
  double out = 0.0;
  for (const Cell& a : P.cells)
    out = std::max(out, cond_moments(pb, a).prob * value_diameter(pb, a));
  return out;
}

double expected_pointwise_diameter(const PopulationProblem& pb,
                                   const Partition& P) {
  double out = 0.0;
  for (const Cell& a : P.cells)
    out += cond_moments(pb, a).prob * value_diameter(pb, a);
  return out;
}

double estimator_population_mse(
    const PopulationProblem& pb, const Partition& P,
    const std::vector<std::optional<double>>& leaf_values) {
  if (leaf_values.size() != P.cells.size())
    throw std::invalid_argument("one leaf value per cell required");
  double mse = 0.0;
  for (std::size_t i = 0; i < P.cells.size(); ++i) {
    const CellMoments cm = cond_moments(pb, P.cells[i]);
    if (!cm.mean) continue;  // zero-mass cell contributes nothing
    if (!leaf_values[i])
      throw std::invalid_argument("undefined leaf value on positive-mass cell");
    const double bias = *cm.mean - *leaf_values[i];
    const double within = *cm.mean_sq - (*cm.mean) * (*cm.mean);
    mse += cm.prob * (within + bias * bias);
  }
  return mse;
}

DiagnosticsReport diagnose(const PopulationProblem& pb) {
  DiagnosticsReport rep;
  rep.c_submodular = submodularity_constant(pb);
  rep.c_diminishing = diminishing_returns_constant(pb);
  rep.beta_split = strong_sparsity_margin(pb, false);
  rep.beta_partition = strong_sparsity_margin(pb, true);
  rep.zeta_q = std::max<int>(1, static_cast<int>(pb.target().relevant.size()));
  rep.zeta = density_lower_bound(pb, rep.zeta_q);
  rep.relevant = relevant_set(pb, {}, 0.0);
  if (std::isinf(rep.c_submodular))
    rep.warnings.push_back("approximate submodularity fails: C is infinite");
  if (std::isinf(rep.c_diminishing))
    rep.warnings.push_back("diminishing returns fails: C is infinite");
  if (!(rep.beta_split > 0.0) && !std::isinf(rep.beta_split))
    rep.warnings.push_back("strong sparsity fails: beta_split <= 0");
  if (!(rep.beta_partition > 0.0) && !std::isinf(rep.beta_partition))
    rep.warnings.push_back("strong partition sparsity fails: beta_partition <= 0");
  if (!(rep.zeta > 0.0))
    rep.warnings.push_back("density lower bound is 0");
  return rep;
}

}  // namespace cart
