#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cuneid/label.hpp"
#include "cuneid/linalg.hpp"
#include "cuneid/rng.hpp"

namespace cuneid {

// Flat binary tree. feature < 0 marks a leaf; a leaf's class-count histogram
// always sums to at least one. Samples with value <= threshold go left.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::array<std::uint64_t, kNumLabels> counts{};
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct ForestParams {
  int trees = 200;
  int max_depth = -1;  // < 0 means unlimited
  int mtry = 8;        // floor(sqrt(77)) for the meta-feature layout
  int min_leaf = 1;
};

namespace detail {

inline double gini(const std::array<std::uint64_t, kNumLabels>& counts, std::uint64_t total) {
  if (total == 0) return 0.0;
  double s = 0.0;
  for (std::uint64_t c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    s += p * p;
  }
  return 1.0 - s;
}

struct TreeGrower {
  const Mat& m;
  const std::vector<int>& labels;
  const ForestParams& params;
  Rng& rng;
  DecisionTree tree;

  std::uint32_t grow(std::vector<std::size_t>& samples, int depth) {
    std::array<std::uint64_t, kNumLabels> counts{};
    for (std::size_t i : samples) counts[labels[i]]++;
    const std::uint64_t total = samples.size();

    int present = 0;
    for (std::uint64_t c : counts) present += c > 0;
    const bool pure = present <= 1;
    const bool at_depth = params.max_depth >= 0 && depth >= params.max_depth;
    const bool too_small = total < 2 * static_cast<std::uint64_t>(params.min_leaf) || total < 2;

    if (!pure && !at_depth && !too_small) {
      if (auto split = best_split(samples, counts, total)) {
        auto [feature, threshold] = *split;
        std::vector<std::size_t> left, right;
        for (std::size_t i : samples) {
          (m.at(i, feature) <= threshold ? left : right).push_back(i);
        }
        samples.clear();
        samples.shrink_to_fit();
        const std::uint32_t node_idx = static_cast<std::uint32_t>(tree.nodes.size());
        tree.nodes.push_back({static_cast<std::int32_t>(feature), threshold, 0, 0, {}});
        const std::uint32_t l = grow(left, depth + 1);
        const std::uint32_t r = grow(right, depth + 1);
        tree.nodes[node_idx].left = l;
        tree.nodes[node_idx].right = r;
        return node_idx;
      }
    }

    const std::uint32_t node_idx = static_cast<std::uint32_t>(tree.nodes.size());
    TreeNode leaf;
    leaf.counts = counts;
    tree.nodes.push_back(leaf);
    return node_idx;
  }

  // Examines mtry distinct features sampled without replacement; thresholds
  // are midpoints between consecutive distinct values. Returns the candidate
  // with the lowest weighted Gini impurity (first win on exact ties), or
  // nothing if every candidate feature is constant over the node.
  std::optional<std::pair<std::size_t, double>> best_split(
      const std::vector<std::size_t>& samples,
      const std::array<std::uint64_t, kNumLabels>& counts, std::uint64_t total) {
    const std::size_t n_features = m.cols;
    const std::size_t mtry =
        std::min<std::size_t>(static_cast<std::size_t>(params.mtry), n_features);
    std::vector<std::size_t> pool(n_features);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t j = 0; j < mtry; ++j) {
      const std::size_t swap_with = j + rng.below(n_features - j);
      std::swap(pool[j], pool[swap_with]);
    }

    double best_impurity = 0.0;
    bool have_best = false;
    std::size_t best_feature = 0;
    double best_threshold = 0.0;

    std::vector<std::pair<double, int>> column(samples.size());
    for (std::size_t j = 0; j < mtry; ++j) {
      const std::size_t f = pool[j];
      for (std::size_t i = 0; i < samples.size(); ++i)
        column[i] = {m.at(samples[i], f), labels[samples[i]]};
      std::sort(column.begin(), column.end());

      std::array<std::uint64_t, kNumLabels> left_counts{};
      std::uint64_t left_n = 0;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        left_counts[column[i].second]++;
        left_n++;
        if (column[i].first == column[i + 1].first) continue;
        if (left_n < static_cast<std::uint64_t>(params.min_leaf)) continue;
        if (total - left_n < static_cast<std::uint64_t>(params.min_leaf)) continue;
        const double a = column[i].first;
        const double b = column[i + 1].first;
        const double t = a + (b - a) / 2.0;
        if (!(a <= t && t < b)) continue;  // midpoint collapsed onto b
        std::array<std::uint64_t, kNumLabels> right_counts;
        for (int c = 0; c < kNumLabels; ++c) right_counts[c] = counts[c] - left_counts[c];
        const double impurity =
            (static_cast<double>(left_n) * gini(left_counts, left_n) +
             static_cast<double>(total - left_n) * gini(right_counts, total - left_n)) /
            static_cast<double>(total);
        if (!have_best || impurity < best_impurity) {
          have_best = true;
          best_impurity = impurity;
          best_feature = f;
          best_threshold = t;
        }
      }
    }
    if (!have_best) return std::nullopt;
    return std::make_pair(best_feature, best_threshold);
  }
};

}  // namespace detail

namespace detail {

inline void check_forest_inputs(const Mat& features, const std::vector<LabelCode>& labels,
                                const ForestParams& params) {
  if (features.rows == 0) throw std::runtime_error("forest: empty training set");
  if (features.rows != labels.size())
    throw std::runtime_error("forest: row/label count mismatch");
  if (params.trees < 1) throw std::runtime_error("forest: need at least one tree");
  if (params.mtry < 1) throw std::runtime_error("forest: mtry must be >= 1");
  if (params.min_leaf < 1) throw std::runtime_error("forest: min_leaf must be >= 1");
}

}  // namespace detail

// Grows a single tree on a bootstrap sample (n draws with replacement) drawn
// from `tree_seed`. Exposed so forest training can run tree-per-task without
// changing the result.
inline DecisionTree train_tree(const Mat& features, const std::vector<LabelCode>& labels,
                               const ForestParams& params, std::uint64_t tree_seed) {
  detail::check_forest_inputs(features, labels, params);
  std::vector<int> label_ids(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) label_ids[i] = label_index(labels[i]);
  Rng rng(tree_seed);
  std::vector<std::size_t> sample(features.rows);
  for (std::size_t i = 0; i < features.rows; ++i) sample[i] = rng.below(features.rows);
  detail::TreeGrower grower{features, label_ids, params, rng, {}};
  grower.grow(sample, 0);
  return std::move(grower.tree);
}

// Tree t uses seed derive_seed(seed, "tree", t); the forest is identical no
// matter how the per-tree work is scheduled.
inline std::vector<DecisionTree> train_forest(const Mat& features,
                                              const std::vector<LabelCode>& labels,
                                              const ForestParams& params, std::uint64_t seed) {
  detail::check_forest_inputs(features, labels, params);
  std::vector<DecisionTree> forest(params.trees);
  for (int t = 0; t < params.trees; ++t)
    forest[t] = train_tree(features, labels, params,
                           derive_seed(seed, "tree", static_cast<std::uint64_t>(t)));
  return forest;
}

// Leaf majority class; histogram ties go to the lowest class index.
inline int tree_vote(const DecisionTree& tree, const double* x) {
  std::uint32_t node = 0;
  while (tree.nodes[node].feature >= 0) {
    const TreeNode& nd = tree.nodes[node];
    node = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
  }
  const auto& counts = tree.nodes[node].counts;
  int best = 0;
  for (int c = 1; c < kNumLabels; ++c) {
    if (counts[c] > counts[best]) best = c;
  }
  return best;
}

struct ForestPrediction {
  LabelCode label = LabelCode::LTB;
  std::array<double, kNumLabels> vote_fractions{};
};

// Plurality over tree votes; ties go to the lowest class index. Fractions
// sum to one and are multiples of 1/trees.
inline ForestPrediction forest_predict(const std::vector<DecisionTree>& forest,
                                       const double* x) {
  if (forest.empty()) throw std::runtime_error("forest: no trees");
  std::array<std::uint64_t, kNumLabels> votes{};
  for (const DecisionTree& tree : forest) votes[tree_vote(tree, x)]++;
  int best = 0;
  for (int c = 1; c < kNumLabels; ++c) {
    if (votes[c] > votes[best]) best = c;
  }
  ForestPrediction out;
  out.label = label_from_index(best);
  for (int c = 0; c < kNumLabels; ++c)
    out.vote_fractions[c] =
        static_cast<double>(votes[c]) / static_cast<double>(forest.size());
  return out;
}

}  // namespace cuneid
