// SPDX-License-Identifier: MIT
#include "cart/data.hpp"

#include "cart/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace cart {

FeatureDistribution FeatureDistribution::product(int d, double p_all) {
  FeatureDistribution f;
  f.kind = Kind::Product;
  f.d = d;
  f.p.assign(static_cast<std::size_t>(d), p_all);
  f.validate();
  return f;
}

FeatureDistribution FeatureDistribution::product(std::vector<double> p) {
  FeatureDistribution f;
  f.kind = Kind::Product;
  f.d = static_cast<int>(p.size());
  f.p = std::move(p);
  f.validate();
  return f;
}

FeatureDistribution FeatureDistribution::block_correlated(
    int d, std::vector<int> block, std::vector<double> pi, double p_others) {
  FeatureDistribution f;
  f.kind = Kind::BlockCorrelated;
  f.d = d;
  f.p.assign(static_cast<std::size_t>(d), p_others);
  f.block = std::move(block);
  f.pi = std::move(pi);
  f.validate();
  return f;
}

void FeatureDistribution::validate() const {
  if (d < 1) throw std::invalid_argument("dimension must be >= 1");
  if (static_cast<int>(p.size()) != d)
    throw std::invalid_argument("probability vector size mismatch");
  if (kind == Kind::Product) {
    for (double v : p)
      if (!(v > 0.0 && v < 1.0))
        throw std::invalid_argument("product parameters must lie in (0,1)");
    if (!block.empty() || !pi.empty())
      throw std::invalid_argument("product law carries no block");
    return;
  }
  if (block.empty() || block.size() > 20)
    throw std::invalid_argument("block size must be in [1, 20]");
  for (std::size_t k = 0; k < block.size(); ++k) {
    if (block[k] < 0 || block[k] >= d)
      throw std::invalid_argument("block coordinate out of range");
    if (k > 0 && block[k] <= block[k - 1])
      throw std::invalid_argument("block coordinates must be sorted distinct");
  }
  if (pi.size() != (static_cast<std::size_t>(1) << block.size()))
    throw std::invalid_argument("joint table size must be 2^|K|");
  double total = 0.0;
  for (double v : pi) {
    if (v < 0.0) throw std::invalid_argument("joint table entries must be >= 0");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("joint table must sum to 1");
  for (std::size_t j = 0; j < p.size(); ++j) {
    const bool in_block =
        std::binary_search(block.begin(), block.end(), static_cast<int>(j));
    if (!in_block && !(p[j] > 0.0 && p[j] < 1.0))
      throw std::invalid_argument("product parameters must lie in (0,1)");
  }
}

void FeatureDistribution::sample_row(Rng& rng, BitMatrix& x,
                                     std::int64_t row) const {
  std::size_t block_idx = 0;
  if (kind == Kind::BlockCorrelated) {
    // Inverse-CDF draw from the joint table.
    double u = rng.next_double();
    double acc = 0.0;
    block_idx = pi.size() - 1;
    for (std::size_t a = 0; a < pi.size(); ++a) {
      acc += pi[a];
      if (u < acc) {
        block_idx = a;
        break;
      }
    }
  }
  std::size_t bpos = 0;
  for (int j = 0; j < d; ++j) {
    if (kind == Kind::BlockCorrelated && bpos < block.size() &&
        block[bpos] == j) {
      x.set(row, j, static_cast<int>((block_idx >> bpos) & 1u));
      ++bpos;
    } else {
      x.set(row, j, rng.next_bernoulli(p[static_cast<std::size_t>(j)]) ? 1 : 0);
    }
  }
}

double marginal_probability(const FeatureDistribution& dist,
                            const std::vector<int>& coords,
                            const std::vector<int>& bits) {
  if (coords.size() != bits.size())
    throw std::invalid_argument("coords and bits must have equal length");
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (coords[i] < 0 || coords[i] >= dist.d)
      throw std::invalid_argument("coordinate out of range");
    for (std::size_t j = i + 1; j < coords.size(); ++j)
      if (coords[i] == coords[j])
        throw std::invalid_argument("duplicate coordinate in marginal query");
    if (bits[i] != 0 && bits[i] != 1)
      throw std::invalid_argument("bits must be 0/1");
  }
  std::size_t uni = coords.size() + dist.block.size();
  if (uni > 25) throw cap_error("marginal enumeration cap exceeded");

  double prod = 1.0;
  double block_factor = 1.0;
  if (dist.kind == FeatureDistribution::Kind::BlockCorrelated) {
    // Sum pi over block assignments consistent with the queried block bits.
    std::size_t mask = 0, want = 0;
    for (std::size_t i = 0; i < coords.size(); ++i) {
      auto it = std::lower_bound(dist.block.begin(), dist.block.end(), coords[i]);
      if (it != dist.block.end() && *it == coords[i]) {
        const std::size_t k = static_cast<std::size_t>(it - dist.block.begin());
        mask |= static_cast<std::size_t>(1) << k;
        if (bits[i]) want |= static_cast<std::size_t>(1) << k;
      }
    }
    if (mask != 0) {
      block_factor = 0.0;
      for (std::size_t a = 0; a < dist.pi.size(); ++a)
        if ((a & mask) == want) block_factor += dist.pi[a];
    }
  }
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const int c = coords[i];
    const bool in_block =
        dist.kind == FeatureDistribution::Kind::BlockCorrelated &&
        std::binary_search(dist.block.begin(), dist.block.end(), c);
    if (in_block) continue;
    const double pc = dist.p[static_cast<std::size_t>(c)];
    prod *= bits[i] ? pc : 1.0 - pc;
  }
  return prod * block_factor;
}

void SparseTarget::validate() const {
  if (d < 1) throw std::invalid_argument("dimension must be >= 1");
  if (relevant.size() > 20)
    throw std::invalid_argument("relevant set exceeds enumeration cap");
  if (static_cast<int>(relevant.size()) > d)
    throw std::invalid_argument("relevant set larger than dimension");
  for (std::size_t k = 0; k < relevant.size(); ++k) {
    if (relevant[k] < 0 || relevant[k] >= d)
      throw std::invalid_argument("relevant coordinate out of range");
    for (std::size_t j = k + 1; j < relevant.size(); ++j)
      if (relevant[k] == relevant[j])
        throw std::invalid_argument("relevant coordinates must be distinct");
  }
  if (table.size() != (static_cast<std::size_t>(1) << relevant.size()))
    throw std::invalid_argument("table size must be 2^r");
  for (double v : table)
    if (!(std::abs(v) <= 0.5 + 1e-15))
      throw std::invalid_argument("table entries must lie in [-1/2, 1/2]");
}

void NoiseModel::validate() const {
  if (kind == Kind::None) return;
  if (!(eps >= 0.0 && eps <= 0.5))
    throw std::invalid_argument("noise halfwidth must lie in [0, 1/2]");
}

double NoiseModel::variance() const {
  switch (kind) {
    case Kind::None:
      return 0.0;
    case Kind::Uniform:
      return eps * eps / 3.0;
    case Kind::Rademacher:
      return eps * eps;
  }
  return 0.0;
}

double NoiseModel::sample(Rng& rng) const {
  switch (kind) {
    case Kind::None:
      return 0.0;
    case Kind::Uniform:
      return eps * (2.0 * rng.next_double() - 1.0);
    case Kind::Rademacher:
      return rng.next_bernoulli(0.5) ? eps : -eps;
  }
  return 0.0;
}

Dataset sample_dataset(const FeatureDistribution& dist,
                       const SparseTarget& target, const NoiseModel& noise,
                       std::int64_t n, const SeedSpec& seed) {
  dist.validate();
  target.validate();
  noise.validate();
  if (target.d != dist.d) throw std::invalid_argument("dimension mismatch");
  if (n < 1) throw std::invalid_argument("n must be >= 1");

  Dataset data;
  data.d = dist.d;
  data.n = n;
  data.x = BitMatrix(n, dist.d);
  data.y.resize(static_cast<std::size_t>(n));
  Rng rx(seed, "features");
  Rng re(seed, "noise");
  for (std::int64_t i = 0; i < n; ++i) {
    dist.sample_row(rx, data.x, i);
    data.y[static_cast<std::size_t>(i)] =
        target.eval(data.x, i) + noise.sample(re);
  }
  return data;
}

std::pair<Dataset, Dataset> split_honest_halves(const Dataset& data,
                                                const SeedSpec& seed) {
  if (data.n < 2) throw std::invalid_argument("honest split needs n >= 2");
  std::vector<std::int64_t> idx(static_cast<std::size_t>(data.n));
  for (std::size_t i = 0; i < idx.size(); ++i)
    idx[i] = static_cast<std::int64_t>(i);
  Rng rng(seed, "honest_split");
  rng.shuffle(idx);
  const std::int64_t n_struct = (data.n + 1) / 2;

  auto take = [&](std::int64_t lo, std::int64_t hi) {
    Dataset part;
    part.d = data.d;
    part.n = hi - lo;
    part.x = BitMatrix(part.n, data.d);
    part.y.resize(static_cast<std::size_t>(part.n));
    for (std::int64_t k = lo; k < hi; ++k) {
      const std::int64_t src = idx[static_cast<std::size_t>(k)];
      for (int j = 0; j < data.d; ++j)
        part.x.set(k - lo, j, data.x.get(src, j));
      part.y[static_cast<std::size_t>(k - lo)] =
          data.y[static_cast<std::size_t>(src)];
    }
    return part;
  };
  return {take(0, n_struct), take(n_struct, data.n)};
}

void Dataset::write_csv(std::ostream& os) const {
  for (int j = 0; j < d; ++j) os << "x_" << (j + 1) << ",";
  os << "y\n";
  char buf[64];
  for (std::int64_t i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      os << x.get(i, j) << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", y[static_cast<std::size_t>(i)]);
    os << buf << '\n';
  }
}

Dataset Dataset::read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("empty CSV");
  int d = 0;
  {
    std::stringstream header(line);
    std::string col;
    std::vector<std::string> cols;
    while (std::getline(header, col, ',')) cols.push_back(col);
    if (cols.empty() || cols.back() != "y")
      throw std::invalid_argument("CSV header must end with y");
    d = static_cast<int>(cols.size()) - 1;
    for (int j = 0; j < d; ++j)
      if (cols[static_cast<std::size_t>(j)] != "x_" + std::to_string(j + 1))
        throw std::invalid_argument("CSV header columns must be x_1..x_d,y");
  }
  std::vector<std::string> rows;
  while (std::getline(is, line)) {
    if (!line.empty()) rows.push_back(line);
  }
  Dataset data;
  data.d = d;
  data.n = static_cast<std::int64_t>(rows.size());
  data.x = BitMatrix(data.n, d);
  data.y.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::stringstream ss(rows[i]);
    std::string tok;
    for (int j = 0; j < d; ++j) {
      if (!std::getline(ss, tok, ','))
        throw std::invalid_argument("CSV row too short");
      if (tok != "0" && tok != "1")
        throw std::invalid_argument("feature bits must be 0/1");
      data.x.set(static_cast<std::int64_t>(i), j, tok == "1" ? 1 : 0);
    }
    if (!std::getline(ss, tok, ','))
      throw std::invalid_argument("CSV row missing y");
    data.y[i] = std::stod(tok);
    if (!(std::abs(data.y[i]) <= 1.0 + 1e-12))
      throw std::invalid_argument("y outside [-1, 1]");
  }
  if (data.n < 1) throw std::invalid_argument("CSV has no data rows");
  return data;
}

}  // namespace cart
