// SPDX-License-Identifier: MIT
#include "cart/tree.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "json.hpp"

namespace cart {

namespace {

// Row-index ranges [lo, hi) into the structure and estimation row buffers,
// tracked per node during construction only.
struct NodeRange {
  std::int64_t slo = 0, shi = 0;
  std::int64_t elo = 0, ehi = 0;
};

struct Builder {
  const BuildConfig& config;
  const Dataset* structure = nullptr;   // split selection reads this half
  const Dataset* estimation = nullptr;  // gating features and leaf labels
  Dataset structure_store, estimation_store;

  std::vector<std::int64_t> srows, erows;
  std::vector<TreeNode> nodes;
  std::vector<NodeRange> ranges;

  explicit Builder(const Dataset& data, const BuildConfig& cfg) : config(cfg) {
    if (data.n < 1) throw std::invalid_argument("empty dataset");
    if (cfg.honest) {
      if (data.n < 2)
        throw std::invalid_argument("honest construction needs n >= 2");
      auto halves = split_honest_halves(data, cfg.seed);
      structure_store = std::move(halves.first);
      estimation_store = std::move(halves.second);
      structure = &structure_store;
      estimation = &estimation_store;
    } else {
      structure = &data;
      estimation = &data;
    }
    srows.resize(static_cast<std::size_t>(structure->n));
    erows.resize(static_cast<std::size_t>(estimation->n));
    std::iota(srows.begin(), srows.end(), 0);
    std::iota(erows.begin(), erows.end(), 0);
  }

  std::int32_t add_node(const NodeRange& r) {
    TreeNode node;
    node.n_gating = r.ehi - r.elo;
    node.n_estimation = r.ehi - r.elo;
    nodes.push_back(node);
    ranges.push_back(r);
    return static_cast<std::int32_t>(nodes.size() - 1);
  }

  std::int64_t count_gating_ones(const NodeRange& r, int coord) const {
    std::int64_t ones = 0;
    for (std::int64_t j = r.elo; j < r.ehi; ++j)
      ones += estimation->x.get(erows[static_cast<std::size_t>(j)], coord) ? 1 : 0;
    return ones;
  }

  // Stable in-place partition of both row buffers by the bit at coord
  // (zeros first), producing the two child ranges.
  std::pair<NodeRange, NodeRange> split_ranges(const NodeRange& r, int coord) {
    auto bit_is_zero_s = [&](std::int64_t row) {
      return !structure->x.get(row, coord);
    };
    auto bit_is_zero_e = [&](std::int64_t row) {
      return !estimation->x.get(row, coord);
    };
    auto smid = std::stable_partition(srows.begin() + r.slo,
                                      srows.begin() + r.shi, bit_is_zero_s);
    auto emid = std::stable_partition(erows.begin() + r.elo,
                                      erows.begin() + r.ehi, bit_is_zero_e);
    const std::int64_t scut = smid - srows.begin();
    const std::int64_t ecut = emid - erows.begin();
    NodeRange left{r.slo, scut, r.elo, ecut};
    NodeRange right{scut, r.shi, ecut, r.ehi};
    return {left, right};
  }

  void execute_split(std::int32_t id, int coord) {
    auto [left, right] = split_ranges(ranges[static_cast<std::size_t>(id)], coord);
    const std::int32_t c0 = add_node(left);
    const std::int32_t c1 = add_node(right);
    nodes[static_cast<std::size_t>(id)].coord = coord;
    nodes[static_cast<std::size_t>(id)].child0 = c0;
    nodes[static_cast<std::size_t>(id)].child1 = c1;
  }

  void fill_leaf_values() {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!nodes[i].is_leaf()) continue;
      const NodeRange& r = ranges[i];
      double sum = 0.0;
      for (std::int64_t j = r.elo; j < r.ehi; ++j)
        sum += estimation->y[static_cast<std::size_t>(
            erows[static_cast<std::size_t>(j)])];
      nodes[i].value = sum / static_cast<double>(r.ehi - r.elo);
    }
  }
};

// V_n(S ∪ {i}) for every candidate i, sharing the grouping of the structure
// rows under the current S.  gid holds the group id per structure row.
double score_level_candidate(const Dataset& data,
                             const std::vector<std::int32_t>& gid,
                             std::int64_t group_count, int coord,
                             std::vector<double>& sum,
                             std::vector<std::int64_t>& cnt) {
  sum.assign(static_cast<std::size_t>(2 * group_count), 0.0);
  cnt.assign(static_cast<std::size_t>(2 * group_count), 0);
  for (std::int64_t j = 0; j < data.n; ++j) {
    const std::size_t key = static_cast<std::size_t>(gid[static_cast<std::size_t>(j)]) * 2 +
                            (data.x.get(j, coord) ? 1 : 0);
    sum[key] += data.y[static_cast<std::size_t>(j)];
    ++cnt[key];
  }
  double v = 0.0;
  for (std::size_t k = 0; k < sum.size(); ++k) {
    if (cnt[k] > 0) {
      const double mean = sum[k] / static_cast<double>(cnt[k]);
      v += static_cast<double>(cnt[k]) * mean * mean;
    }
  }
  return v / static_cast<double>(data.n);
}

Tree build_level_split(const Dataset& data, const BuildConfig& config) {
  if (!config.fully_grown &&
      (config.budget < 0 || config.budget > data.d))
    throw std::invalid_argument("level budget must lie in [0, d]");
  Builder b(data, config);
  b.add_node(NodeRange{0, b.structure->n, 0, b.estimation->n});

  // Grouping of the structure rows under the selected coordinates so far.
  std::vector<std::int32_t> gid(static_cast<std::size_t>(b.structure->n), 0);
  std::int64_t group_count = 1;
  std::vector<std::int32_t> remap;
  std::vector<double> sum;
  std::vector<std::int64_t> cnt;

  SplitSet S;
  const std::int64_t max_levels =
      config.fully_grown ? data.d : config.budget;
  // A split needs both gating subcells nonempty, hence >= 2 gating points;
  // fully grown construction additionally demands >= 4.
  const std::int64_t min_gating = config.fully_grown ? 4 : 2;

  for (std::int64_t level = 0; level < max_levels; ++level) {
    if (static_cast<int>(S.size()) >= data.d) break;
    if (config.fully_grown) {
      bool splittable = false;
      for (std::size_t i = 0; i < b.nodes.size() && !splittable; ++i)
        if (b.nodes[i].is_leaf() && b.nodes[i].n_gating >= 4) splittable = true;
      if (!splittable) break;
    }

    std::vector<int> cands;
    std::vector<double> vals;
    for (int i = 0; i < data.d; ++i) {
      if (std::find(S.begin(), S.end(), i) != S.end()) continue;
      cands.push_back(i);
      vals.push_back(score_level_candidate(*b.structure, gid, group_count, i,
                                           sum, cnt));
    }
    Rng rng(config.seed, "level", static_cast<std::uint64_t>(level));
    const int coord = pick_max_with_ties(cands, vals, rng,
                                         config.tie_tolerance);
    S.push_back(coord);

    // Refine the structure grouping by the chosen coordinate.
    remap.assign(static_cast<std::size_t>(2 * group_count), -1);
    std::int32_t next = 0;
    for (std::int64_t j = 0; j < b.structure->n; ++j) {
      const std::size_t key =
          static_cast<std::size_t>(gid[static_cast<std::size_t>(j)]) * 2 +
          (b.structure->x.get(j, coord) ? 1 : 0);
      if (remap[key] < 0) remap[key] = next++;
      gid[static_cast<std::size_t>(j)] = remap[key];
    }
    group_count = next;

    // Apply the coordinate to every current leaf that passes the gating
    // rule; the rest stay leaves and may still split at later levels.
    const std::size_t leaf_end = b.nodes.size();
    for (std::size_t id = 0; id < leaf_end; ++id) {
      if (!b.nodes[id].is_leaf()) continue;
      if (b.nodes[id].n_gating < min_gating) continue;
      const std::int64_t ones =
          b.count_gating_ones(b.ranges[id], coord);
      const std::int64_t zeros = b.nodes[id].n_gating - ones;
      if (ones < 1 || zeros < 1) continue;
      b.execute_split(static_cast<std::int32_t>(id), coord);
    }
  }

  b.fill_leaf_values();
  Tree tree;
  tree.variant = TreeVariant::LevelSplit;
  tree.honest = config.honest;
  tree.d = data.d;
  tree.nodes = std::move(b.nodes);
  tree.split_order = std::move(S);
  return tree;
}

Tree build_breiman(const Dataset& data, const BuildConfig& config) {
  if (!config.fully_grown && config.budget < 1)
    throw std::invalid_argument("leaf budget must be >= 1");
  Builder b(data, config);
  b.add_node(NodeRange{0, b.structure->n, 0, b.estimation->n});

  struct Pending {
    std::int32_t id;
    Cell cell;
  };
  std::deque<Pending> queue;
  queue.push_back({0, Cell::root(data.d)});
  std::int64_t leaves = 1;
  const std::int64_t min_gating = config.fully_grown ? 4 : 2;

  while (!queue.empty()) {
    if (!config.fully_grown && leaves >= config.budget) break;
    Pending cur = std::move(queue.front());
    queue.pop_front();
    const std::size_t id = static_cast<std::size_t>(cur.id);
    const NodeRange r = b.ranges[id];
    if (b.nodes[id].n_gating < min_gating) continue;

    // Candidate coordinates: unfixed on the path and splitting the gating
    // points into two nonempty halves (keeps every leaf estimable).
    std::vector<int> cands;
    for (int i = 0; i < data.d; ++i) {
      if (cur.cell.fixes(i)) continue;
      const std::int64_t ones = b.count_gating_ones(r, i);
      if (ones >= 1 && b.nodes[id].n_gating - ones >= 1) cands.push_back(i);
    }
    if (cands.empty()) continue;

    // Score candidates on the structure rows in the cell; a cell with no
    // structure rows scores every candidate 0 and the tie rule picks
    // uniformly.
    std::vector<double> vals(cands.size(), 0.0);
    const std::int64_t ns = r.shi - r.slo;
    if (ns > 0) {
      for (std::size_t k = 0; k < cands.size(); ++k) {
        std::int64_t cnt1 = 0;
        double sum0 = 0.0, sum1 = 0.0;
        for (std::int64_t j = r.slo; j < r.shi; ++j) {
          const std::int64_t row = b.srows[static_cast<std::size_t>(j)];
          const double y = b.structure->y[static_cast<std::size_t>(row)];
          if (b.structure->x.get(row, cands[k])) {
            ++cnt1;
            sum1 += y;
          } else {
            sum0 += y;
          }
        }
        const std::int64_t cnt0 = ns - cnt1;
        double v = 0.0;
        if (cnt0 > 0) {
          const double g = sum0 / static_cast<double>(cnt0);
          v += (static_cast<double>(cnt0) / static_cast<double>(ns)) * g * g;
        }
        if (cnt1 > 0) {
          const double g = sum1 / static_cast<double>(cnt1);
          v += (static_cast<double>(cnt1) / static_cast<double>(ns)) * g * g;
        }
        vals[k] = v;
      }
    }
    Rng rng(config.seed, "node", static_cast<std::uint64_t>(cur.id));
    const int coord = pick_max_with_ties(cands, vals, rng,
                                         config.tie_tolerance);
    b.execute_split(cur.id, coord);
    queue.push_back({b.nodes[id].child0, cur.cell.child(coord, 0)});
    queue.push_back({b.nodes[id].child1, cur.cell.child(coord, 1)});
    ++leaves;
  }

  b.fill_leaf_values();
  Tree tree;
  tree.variant = TreeVariant::Breiman;
  tree.honest = config.honest;
  tree.d = data.d;
  tree.nodes = std::move(b.nodes);
  return tree;
}

}  // namespace

Tree build_tree(const Dataset& data, const BuildConfig& config) {
  if (config.variant == TreeVariant::LevelSplit)
    return build_level_split(data, config);
  return build_breiman(data, config);
}

double Tree::predict(const BitMatrix& x, std::int64_t row) const {
  std::size_t id = 0;
  while (!nodes[id].is_leaf()) {
    id = static_cast<std::size_t>(x.get(row, nodes[id].coord)
                                      ? nodes[id].child1
                                      : nodes[id].child0);
  }
  return nodes[id].value;
}

Partition Tree::to_partition() const {
  Partition P;
  std::vector<std::pair<std::int32_t, Cell>> stack;
  stack.emplace_back(0, Cell::root(d));
  while (!stack.empty()) {
    auto [id, cell] = std::move(stack.back());
    stack.pop_back();
    const TreeNode& node = nodes[static_cast<std::size_t>(id)];
    if (node.is_leaf()) {
      P.cells.push_back(std::move(cell));
    } else {
      // Push bit-1 first so the bit-0 child is emitted first (preorder).
      stack.emplace_back(node.child1, cell.child(node.coord, 1));
      stack.emplace_back(node.child0, cell.child(node.coord, 0));
    }
  }
  return P;
}

std::string Tree::to_json() const {
  nlohmann::json doc;
  doc["variant"] = variant == TreeVariant::LevelSplit ? "level_split"
                                                      : "breiman";
  doc["honest"] = honest;
  doc["d"] = d;
  nlohmann::json order = nlohmann::json::array();
  for (int c : split_order) order.push_back(c + 1);
  doc["split_order"] = std::move(order);

  nlohmann::json arr = nlohmann::json::array();
  std::vector<std::int32_t> stack{0};
  while (!stack.empty()) {
    const std::int32_t id = stack.back();
    stack.pop_back();
    const TreeNode& node = nodes[static_cast<std::size_t>(id)];
    nlohmann::json j;
    if (node.is_leaf()) {
      j["value"] = node.value;
    } else {
      j["coord"] = node.coord + 1;
      stack.push_back(node.child1);
      stack.push_back(node.child0);
    }
    j["n_gating"] = node.n_gating;
    j["n_estimation"] = node.n_estimation;
    arr.push_back(std::move(j));
  }
  doc["nodes"] = std::move(arr);
  return doc.dump(2);
}

namespace {

// Rebuilds the subtree rooted at the next preorder entry; returns its id.
std::int32_t parse_subtree(const nlohmann::json& arr, std::size_t& pos,
                           int d, std::vector<TreeNode>& nodes) {
  if (pos >= arr.size())
    throw std::invalid_argument("tree JSON: truncated node list");
  const nlohmann::json& j = arr[pos++];
  TreeNode node;
  node.n_gating = j.at("n_gating").get<std::int64_t>();
  node.n_estimation = j.at("n_estimation").get<std::int64_t>();
  const std::int32_t id = static_cast<std::int32_t>(nodes.size());
  nodes.push_back(node);
  if (j.contains("coord")) {
    const int coord = j.at("coord").get<int>() - 1;
    if (coord < 0 || coord >= d)
      throw std::invalid_argument("tree JSON: coordinate out of range");
    nodes[static_cast<std::size_t>(id)].coord = coord;
    const std::int32_t c0 = parse_subtree(arr, pos, d, nodes);
    const std::int32_t c1 = parse_subtree(arr, pos, d, nodes);
    nodes[static_cast<std::size_t>(id)].child0 = c0;
    nodes[static_cast<std::size_t>(id)].child1 = c1;
  } else {
    nodes[static_cast<std::size_t>(id)].value = j.at("value").get<double>();
  }
  return id;
}

}  // namespace

Tree Tree::from_json(const std::string& text) {
  const nlohmann::json doc = nlohmann::json::parse(text);
  Tree tree;
  const std::string variant = doc.at("variant").get<std::string>();
  if (variant == "level_split")
    tree.variant = TreeVariant::LevelSplit;
  else if (variant == "breiman")
    tree.variant = TreeVariant::Breiman;
  else
    throw std::invalid_argument("tree JSON: unknown variant");
  tree.honest = doc.at("honest").get<bool>();
  tree.d = doc.at("d").get<int>();
  if (tree.d < 1) throw std::invalid_argument("tree JSON: bad dimension");
  for (const auto& c : doc.at("split_order")) {
    const int coord = c.get<int>() - 1;
    if (coord < 0 || coord >= tree.d)
      throw std::invalid_argument("tree JSON: split_order out of range");
    tree.split_order.push_back(coord);
  }
  std::size_t pos = 0;
  const auto& arr = doc.at("nodes");
  if (!arr.is_array() || arr.empty())
    throw std::invalid_argument("tree JSON: nodes must be a nonempty array");
  parse_subtree(arr, pos, tree.d, tree.nodes);
  if (pos != arr.size())
    throw std::invalid_argument("tree JSON: trailing nodes");
  return tree;
}

}  // namespace cart
