// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cart/cells.hpp"
#include "cart/data.hpp"
#include "cart/rng.hpp"

namespace cart {

// Exact population functionals of (feature law, target).  All expectations
// enumerate the "live" coordinates R ∪ K; coordinates outside that set are
// independent of m and marginalize analytically, so only |R ∪ K| bounds the
// cost.  Construction enforces |R ∪ K| <= 22.
class PopulationProblem {
 public:
  PopulationProblem(FeatureDistribution dist, SparseTarget target);

  const FeatureDistribution& dist() const { return dist_; }
  const SparseTarget& target() const { return target_; }
  int d() const { return dist_.d; }
  const std::vector<int>& live() const { return live_; }
  bool is_live(int coord) const { return live_pos_[coord] >= 0; }
  // Index of coord inside live(), or -1 when the coordinate is not live.
  int live_index(int coord) const { return live_pos_[coord]; }

  double mean_m() const { return m1_; }
  double mean_m_sq() const { return m2_; }

  // Weighted enumeration table over {0,1}^{live}: bit k of an index is the
  // value of live()[k].
  const std::vector<double>& weights() const { return weight_; }
  const std::vector<double>& target_values() const { return mval_; }

 private:
  FeatureDistribution dist_;
  SparseTarget target_;
  std::vector<int> live_;
  std::vector<int> live_pos_;  // size d; index into live_ or -1
  std::vector<double> weight_;
  std::vector<double> mval_;
  double m1_ = 0.0;
  double m2_ = 0.0;
};

struct CellMoments {
  double prob = 0.0;
  // Undefined (zero-mass cell) when absent.
  std::optional<double> mean;
  std::optional<double> mean_sq;
};

CellMoments cond_moments(const PopulationProblem& pb, const Cell& cell);

// V̄(S) = Σ_z Pr(x_S = z)·E[m | x_S = z]² and L̄(S) = E[m²] − V̄(S).
double vbar(const PopulationProblem& pb, const SplitSet& S);
double lbar(const PopulationProblem& pb, const SplitSet& S);

// Within-cell analogues: V̄_ℓ(A, I) = E[E[m | A split by I]² | A].
double vbar_leaf(const PopulationProblem& pb, const Cell& A,
                 const std::vector<int>& I);
double lbar_leaf(const PopulationProblem& pb, const Cell& A,
                 const std::vector<int>& I);

// Partition functionals: V̄(P) = Σ_A Pr(A)·E[m|A]², L̄(P) = Σ_A Pr(A)·L̄_ℓ(A).
double vbar_partition(const PopulationProblem& pb, const Partition& P);
double lbar_partition(const PopulationProblem& pb, const Partition& P);

// Population greedy algorithms.  Ties (within 1e-12 of the max, scaled by
// max(1, |max|)) are broken uniformly at random from the given stream.
struct PopulationLevelSplitResult {
  SplitSet splits;
  // Estimator m̄(x) = E[m | x_S = z_S]; undefined on zero-mass classes.
  std::optional<double> predict(const PopulationProblem& pb,
                                const BitMatrix& x, std::int64_t row) const;
  Partition to_partition(int d) const;  // all 2^|S| cells; |S| <= 20
};

PopulationLevelSplitResult population_level_split(const PopulationProblem& pb,
                                                  int levels,
                                                  const SeedSpec& tie_seed);

// One selection step of the level-split greedy; exposed for experiments that
// watch which coordinate each level picks.
int select_level_coordinate(const PopulationProblem& pb, const SplitSet& S,
                            Rng& rng, double tie_tol = 1e-12);

struct PopulationTreeResult {
  Partition partition;
  std::vector<std::optional<double>> leaf_values;
  std::optional<double> predict(const BitMatrix& x, std::int64_t row) const;
};

PopulationTreeResult population_breiman(const PopulationProblem& pb,
                                        std::int64_t t_leaves,
                                        const SeedSpec& tie_seed);

// R^η(S) = {i : V̄(S ∪ {i}) − V̄(S) > η}; η = 0 gives the relevant set R(S).
std::vector<int> relevant_set(const PopulationProblem& pb, const SplitSet& S,
                              double eta = 0.0);
std::vector<int> leaf_relevant_set(const PopulationProblem& pb, const Cell& A,
                                   double eta = 0.0);

// Assumption diagnostics.  Searches restrict off-(R ∪ K) coordinates to one
// representative; exact when the law is exchangeable off R (always true
// here, since off-block coordinates are independent), a lower bound on the
// constants in full generality.
double submodularity_constant(const PopulationProblem& pb, int scope = -1);
double diminishing_returns_constant(const PopulationProblem& pb,
                                    int scope = -1);
double strong_sparsity_margin(const PopulationProblem& pb,
                              bool partition_variant);
double density_lower_bound(const PopulationProblem& pb, int q);

// Δ_m(A) = max over positive-mass x, y ∈ A of (m(x) − m(y))².
double value_diameter(const PopulationProblem& pb, const Cell& A);
// Δ_m(P) = max_A Pr(A)·Δ_m(A).
double partition_value_diameter(const PopulationProblem& pb,
                                const Partition& P);
// E_x[Δ_m(P(x))] = Σ_A Pr(A)·Δ_m(A).
double expected_pointwise_diameter(const PopulationProblem& pb,
                                   const Partition& P);

// Exact E_x[(m(x) − v_{P(x)})²] = Σ_A Pr(A)·[L̄_ℓ(A) + (E[m|A] − v_A)²].
// v_A may be absent only on zero-mass cells.
double estimator_population_mse(
    const PopulationProblem& pb, const Partition& P,
    const std::vector<std::optional<double>>& leaf_values);

struct DiagnosticsReport {
  double c_submodular = 1.0;       // +inf marker via std::isinf
  double c_diminishing = 1.0;
  double beta_split = 0.0;
  double beta_partition = 0.0;
  double zeta = 0.0;
  int zeta_q = 0;
  std::vector<int> relevant;       // R(∅), 0-based
  std::vector<std::string> warnings;
};

DiagnosticsReport diagnose(const PopulationProblem& pb);

}  // namespace cart
