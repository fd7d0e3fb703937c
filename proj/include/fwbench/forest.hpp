#pragma once

#include "fwbench/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fwbench {

struct RfHyperparams {
  int n_estimators = 100;
  int max_depth = 3;
  int max_features = 2;  ///< clamped to the number of columns at training time
  double max_samples = 0.5;

  bool operator==(const RfHyperparams&) const = default;
};

/// Axis-aligned binary tree stored as parallel node arrays. A node with
/// feature < 0 is a leaf whose value is the AF-class frequency.
struct DecisionTree {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  std::vector<double> value;

  template <typename Row>
  double predict(const Row& x) const {
    int node = 0;
    while (feature[node] >= 0) {
      node = x[feature[node]] <= threshold[node] ? left[node] : right[node];
    }
    return value[node];
  }

  int depth() const;
  std::size_t node_count() const { return feature.size(); }
};

struct TrainedForest {
  std::vector<DecisionTree> trees;
  RfHyperparams hyperparams;
  std::uint64_t seed = 0;
  std::vector<std::string> feature_names;
};

/// Trains n_estimators Gini trees. Tree i draws its bootstrap
/// (round(max_samples * n) rows with replacement) and its per-split feature
/// subsets from derive_seed(seed, i), so a smaller forest with the same seed
/// is a prefix of a larger one.
TrainedForest train_forest(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                           const RfHyperparams& hp, std::uint64_t seed,
                           std::vector<std::string> feature_names = {});

/// Mean leaf AF frequency over the trees, per row.
Signal predict_proba(const TrainedForest& model, const Eigen::MatrixXd& features);

/// Same, averaged over only the first `n_trees` trees.
Signal predict_proba_prefix(const TrainedForest& model, const Eigen::MatrixXd& features,
                            std::size_t n_trees);

/// Versioned JSON model file.
void save_forest(const TrainedForest& model, const std::filesystem::path& path);
TrainedForest load_forest(const std::filesystem::path& path);

}  // namespace fwbench
