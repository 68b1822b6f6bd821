// SPDX-License-Identifier: MIT
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>
#include <vector>

namespace cart {

// Deterministic stream derivation: a (master_seed, purpose-tag, index) triple
// maps to an independent generator state.  Streams depend only on the triple,
// never on call order or thread schedule.
struct SeedSpec {
  std::uint64_t master_seed = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

inline std::uint64_t derive_stream(std::uint64_t master, std::string_view tag,
                                   std::uint64_t index) {
  std::uint64_t h = detail::splitmix64(master ^ detail::fnv1a64(tag));
  return detail::splitmix64(h ^ detail::splitmix64(index));
}

// Wraps mt19937_64 with distribution code of our own so that every drawn
// value is a pure function of the seed (libstdc++ distribution objects make
// no such cross-version promise).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  Rng(const SeedSpec& spec, std::string_view tag, std::uint64_t index = 0)
      : gen_(derive_stream(spec.master_seed, tag, index)) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  bool next_bernoulli(double p) { return next_double() < p; }

  // Unbiased uniform integer in [0, n) by rejection.
  std::uint64_t next_below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return v % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Uniform ordered s-subset of [0, n): Floyd's sampling then a full shuffle
  // of the s picks, so both the subset and its order are uniform.
  std::vector<std::int64_t> sample_without_replacement(std::int64_t n,
                                                       std::int64_t s);

 private:
  std::mt19937_64 gen_;
};

// Uniform choice among the candidates whose score is within a relative
// tolerance of the maximum.  This is the shared tie-breaking rule for every
// greedy argmax in the library.
template <typename T>
T pick_max_with_ties(const std::vector<T>& cands,
                     const std::vector<double>& vals, Rng& rng,
                     double tie_tol) {
  double vmax = -std::numeric_limits<double>::infinity();
  for (double v : vals) vmax = std::max(vmax, v);
  const double cut = vmax - tie_tol * std::max(1.0, std::abs(vmax));
  std::vector<T> ties;
  for (std::size_t i = 0; i < cands.size(); ++i)
    if (vals[i] >= cut) ties.push_back(cands[i]);
  return ties[static_cast<std::size_t>(rng.next_below(ties.size()))];
}

inline std::vector<std::int64_t> Rng::sample_without_replacement(
    std::int64_t n, std::int64_t s) {
  std::vector<std::int64_t> picked;
  picked.reserve(static_cast<std::size_t>(s));
  for (std::int64_t j = n - s; j < n; ++j) {
    std::int64_t t = static_cast<std::int64_t>(next_below(
        static_cast<std::uint64_t>(j) + 1));
    bool seen = false;
    for (std::int64_t p : picked) {
      if (p == t) {
        seen = true;
        break;
      }
    }
    picked.push_back(seen ? j : t);
  }
  shuffle(picked);
  return picked;
}

}  // namespace cart
