// SPDX-License-Identifier: MIT
#include "cart/empirical.hpp"

#include <numeric>
#include <stdexcept>

namespace cart {

Grouper::Grouper(const BitMatrix* x, std::vector<std::int64_t> rows)
    : x_(x), rows_(std::move(rows)), gid_(rows_.size(), 0),
      group_count_(rows_.empty() ? 0 : 1) {}

void Grouper::refine(int coord) {
  remap_.assign(static_cast<std::size_t>(2 * group_count_), -1);
  std::int32_t next = 0;
  for (std::size_t j = 0; j < rows_.size(); ++j) {
    const std::size_t key = static_cast<std::size_t>(gid_[j]) * 2 +
                            (x_->get(rows_[j], coord) ? 1 : 0);
    if (remap_[key] < 0) remap_[key] = next++;
    gid_[j] = remap_[key];
  }
  group_count_ = next;
}

std::vector<double> Grouper::group_means(const std::vector<double>& y) const {
  std::vector<double> sum(static_cast<std::size_t>(group_count_), 0.0);
  std::vector<std::int64_t> cnt(static_cast<std::size_t>(group_count_), 0);
  for (std::size_t j = 0; j < rows_.size(); ++j) {
    sum[static_cast<std::size_t>(gid_[j])] += y[static_cast<std::size_t>(rows_[j])];
    ++cnt[static_cast<std::size_t>(gid_[j])];
  }
  std::vector<double> mean(sum.size());
  for (std::size_t g = 0; g < sum.size(); ++g)
    mean[g] = sum[g] / static_cast<double>(cnt[g]);
  return mean;
}

double empirical_v(const Dataset& data, const SplitSet& S) {
  if (data.n < 1) throw std::invalid_argument("empty dataset");
  validate_split_set(S, data.d);
  std::vector<std::int64_t> rows(static_cast<std::size_t>(data.n));
  std::iota(rows.begin(), rows.end(), 0);
  Grouper g(&data.x, std::move(rows));
  for (int c : S) g.refine(c);
  const std::vector<double> mean = g.group_means(data.y);
  const auto& gid = g.group_ids();
  double v = 0.0;
  for (std::size_t j = 0; j < gid.size(); ++j) {
    const double m = mean[static_cast<std::size_t>(gid[j])];
    v += m * m;
  }
  return v / static_cast<double>(data.n);
}

double empirical_l(const Dataset& data, const SplitSet& S) {
  if (data.n < 1) throw std::invalid_argument("empty dataset");
  double ysq = 0.0;
  for (std::size_t j = 0; j < data.y.size(); ++j) ysq += data.y[j] * data.y[j];
  return ysq / static_cast<double>(data.n) - empirical_v(data, S);
}

double estimate_with_splits(const Dataset& data, const SplitSet& S,
                            const BitMatrix& x, std::int64_t row) {
  if (data.n < 1) throw std::invalid_argument("empty dataset");
  validate_split_set(S, data.d);
  std::vector<std::int64_t> match(static_cast<std::size_t>(data.n));
  std::iota(match.begin(), match.end(), 0);
  std::vector<std::int64_t> next;
  for (int c : S) {
    const bool bit = x.get(row, c);
    next.clear();
    for (std::int64_t j : match)
      if (data.x.get(j, c) == bit) next.push_back(j);
    if (!next.empty()) match.swap(next);
  }
  double sum = 0.0;
  for (std::int64_t j : match) sum += data.y[static_cast<std::size_t>(j)];
  return sum / static_cast<double>(match.size());
}

double empirical_v_leaf(const Dataset& data, const Cell& A, int coord) {
  if (coord < 0 || coord >= data.d)
    throw std::invalid_argument("coordinate out of range");
  if (A.d != data.d) throw std::invalid_argument("cell dimension mismatch");
  std::int64_t cnt[2] = {0, 0};
  double sum[2] = {0.0, 0.0};
  for (std::int64_t j = 0; j < data.n; ++j) {
    if (!A.contains_row(data.x, j)) continue;
    const int z = data.x.get(j, coord) ? 1 : 0;
    ++cnt[z];
    sum[z] += data.y[static_cast<std::size_t>(j)];
  }
  const std::int64_t total = cnt[0] + cnt[1];
  if (total < 1) throw std::invalid_argument("empty cell");
  double v = 0.0;
  for (int z = 0; z < 2; ++z) {
    if (cnt[z] > 0) {
      const double g = sum[z] / static_cast<double>(cnt[z]);
      v += (static_cast<double>(cnt[z]) / static_cast<double>(total)) * g * g;
    }
  }
  return v;
}

}  // namespace cart
