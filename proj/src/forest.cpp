#include "fwbench/forest.hpp"

#include "fwbench/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace fwbench {

using nlohmann::json;

int DecisionTree::depth() const {
  if (feature.empty()) return 0;
  int deepest = 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [node, d] = stack.back();
    stack.pop_back();
    if (feature[node] < 0) {
      deepest = std::max(deepest, d);
    } else {
      stack.emplace_back(left[node], d + 1);
      stack.emplace_back(right[node], d + 1);
    }
  }
  return deepest;
}

namespace {

/// Grows one tree on weighted (bootstrap-count) rows. Every node owns the
/// same contiguous range in each per-feature sorted index array.
class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const std::vector<int>& y,
              const std::vector<std::vector<Index>>& global_order, const std::vector<int>& counts,
              int max_depth, int max_features, std::mt19937_64& rng)
      : x_(x), y_(y), counts_(counts), max_depth_(max_depth), max_features_(max_features),
        rng_(rng) {
    const auto n_features = static_cast<int>(x.cols());
    sorted_.resize(static_cast<std::size_t>(n_features));
    for (int f = 0; f < n_features; ++f) {
      auto& dst = sorted_[static_cast<std::size_t>(f)];
      for (Index r : global_order[static_cast<std::size_t>(f)]) {
        if (counts_[static_cast<std::size_t>(r)] > 0) dst.push_back(r);
      }
    }
    scratch_.resize(sorted_.front().size());
    goes_left_.assign(static_cast<std::size_t>(x.rows()), 0);
    feature_pool_.resize(static_cast<std::size_t>(n_features));
  }

  DecisionTree build() {
    grow(0, sorted_.front().size(), 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = std::numeric_limits<double>::infinity();
  };

  int add_node() {
    tree_.feature.push_back(-1);
    tree_.threshold.push_back(0.0);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    tree_.value.push_back(0.0);
    return static_cast<int>(tree_.feature.size() - 1);
  }

  int grow(std::size_t begin, std::size_t end, int depth) {
    const int node = add_node();
    double w = 0.0, w_af = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const Index r = sorted_[0][i];
      const double c = counts_[static_cast<std::size_t>(r)];
      w += c;
      w_af += c * y_[static_cast<std::size_t>(r)];
    }
    tree_.value[static_cast<std::size_t>(node)] = w > 0.0 ? w_af / w : 0.0;
    if (depth >= max_depth_ || w_af == 0.0 || w_af == w || end - begin < 2) return node;

    const Split split = best_split(begin, end);
    if (split.feature < 0) return node;

    std::size_t n_left = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const Index r = sorted_[0][i];
      const bool left = x_(r, split.feature) <= split.threshold;
      goes_left_[static_cast<std::size_t>(r)] = left;
      n_left += left;
    }
    for (auto& order : sorted_) {
      std::size_t l = begin, rr = 0;
      for (std::size_t i = begin; i < end; ++i) {
        const Index r = order[i];
        if (goes_left_[static_cast<std::size_t>(r)]) {
          order[l++] = r;
        } else {
          scratch_[rr++] = r;
        }
      }
      std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(rr),
                order.begin() + static_cast<std::ptrdiff_t>(l));
    }

    tree_.feature[static_cast<std::size_t>(node)] = split.feature;
    tree_.threshold[static_cast<std::size_t>(node)] = split.threshold;
    const int l = grow(begin, begin + n_left, depth + 1);
    tree_.left[static_cast<std::size_t>(node)] = l;
    const int r = grow(begin + n_left, end, depth + 1);
    tree_.right[static_cast<std::size_t>(node)] = r;
    return node;
  }

  Split best_split(std::size_t begin, std::size_t end) {
    const auto n_features = static_cast<int>(sorted_.size());
    std::iota(feature_pool_.begin(), feature_pool_.end(), 0);

    double total_w = 0.0, total_af = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const Index r = sorted_[0][i];
      total_w += counts_[static_cast<std::size_t>(r)];
      total_af += counts_[static_cast<std::size_t>(r)] * y_[static_cast<std::size_t>(r)];
    }

    Split best;
    int visited = 0;
    for (int k = 0; k < n_features && visited < max_features_; ++k) {
      std::uniform_int_distribution<int> pick(k, n_features - 1);
      std::swap(feature_pool_[static_cast<std::size_t>(k)],
                feature_pool_[static_cast<std::size_t>(pick(rng_))]);
      const int f = feature_pool_[static_cast<std::size_t>(k)];
      const auto& order = sorted_[static_cast<std::size_t>(f)];
      if (x_(order[begin], f) == x_(order[end - 1], f)) continue;  // constant here
      ++visited;

      double wl = 0.0, wl_af = 0.0;
      for (std::size_t i = begin; i + 1 < end; ++i) {
        const Index r = order[i];
        wl += counts_[static_cast<std::size_t>(r)];
        wl_af += counts_[static_cast<std::size_t>(r)] * y_[static_cast<std::size_t>(r)];
        const double v = x_(r, f);
        const double v_next = x_(order[i + 1], f);
        if (!(v < v_next)) continue;
        const double wr = total_w - wl;
        const double wr_af = total_af - wl_af;
        const double impurity = 2.0 * wl_af * (wl - wl_af) / wl + 2.0 * wr_af * (wr - wr_af) / wr;
        if (impurity < best.impurity) {
          best.impurity = impurity;
          best.feature = f;
          double thr = 0.5 * (v + v_next);
          if (!(thr < v_next)) thr = v;
          best.threshold = thr;
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXd& x_;
  const std::vector<int>& y_;
  const std::vector<int>& counts_;
  int max_depth_;
  int max_features_;
  std::mt19937_64& rng_;
  std::vector<std::vector<Index>> sorted_;
  std::vector<Index> scratch_;
  std::vector<char> goes_left_;
  std::vector<int> feature_pool_;
  DecisionTree tree_;
};

void check_hyperparams(const RfHyperparams& hp) {
  if (hp.n_estimators < 1 || hp.max_depth < 1 || hp.max_features < 1 || !(hp.max_samples > 0.0) ||
      hp.max_samples > 1.0) {
    fail(ErrorKind::InvalidArgument, "random-forest hyperparameters out of range");
  }
}

}  // namespace

TrainedForest train_forest(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                           const RfHyperparams& hp, std::uint64_t seed,
                           std::vector<std::string> feature_names) {
  check_hyperparams(hp);
  const Index n = features.rows();
  if (static_cast<Index>(labels.size()) != n) {
    fail(ErrorKind::LengthMismatch, "feature rows and labels differ in length");
  }
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size())) {
    fail(ErrorKind::SingleClass, "training set contains a single class");
  }
  if (features.cols() < 1) fail(ErrorKind::InvalidArgument, "no feature columns");
  if (!feature_names.empty() && static_cast<Index>(feature_names.size()) != features.cols()) {
    fail(ErrorKind::ColumnMismatch, "feature names do not match the column count");
  }

  std::vector<std::vector<Index>> order(static_cast<std::size_t>(features.cols()));
  for (Index f = 0; f < features.cols(); ++f) {
    auto& o = order[static_cast<std::size_t>(f)];
    o.resize(static_cast<std::size_t>(n));
    std::iota(o.begin(), o.end(), Index{0});
    std::stable_sort(o.begin(), o.end(),
                     [&](Index a, Index b) { return features(a, f) < features(b, f); });
  }

  const int max_features = std::min<int>(hp.max_features, static_cast<int>(features.cols()));
  const auto n_boot = std::max<Index>(1, std::llround(hp.max_samples * static_cast<double>(n)));

  TrainedForest forest;
  forest.hyperparams = hp;
  forest.seed = seed;
  forest.feature_names = std::move(feature_names);
  forest.trees.reserve(static_cast<std::size_t>(hp.n_estimators));
  std::vector<int> counts(static_cast<std::size_t>(n));
  for (int t = 0; t < hp.n_estimators; ++t) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    std::uniform_int_distribution<Index> draw(0, n - 1);
    std::fill(counts.begin(), counts.end(), 0);
    for (Index k = 0; k < n_boot; ++k) ++counts[static_cast<std::size_t>(draw(rng))];
    TreeBuilder builder(features, labels, order, counts, hp.max_depth, max_features, rng);
    forest.trees.push_back(builder.build());
  }
  return forest;
}

Signal predict_proba_prefix(const TrainedForest& model, const Eigen::MatrixXd& features,
                            std::size_t n_trees) {
  if (!model.feature_names.empty() &&
      static_cast<Index>(model.feature_names.size()) != features.cols()) {
    fail(ErrorKind::ColumnMismatch, "feature columns do not match the trained model");
  }
  n_trees = std::min(n_trees, model.trees.size());
  if (n_trees == 0) fail(ErrorKind::InvalidArgument, "model has no trees");
  int max_feature = -1;
  for (std::size_t t = 0; t < n_trees; ++t) {
    for (int f : model.trees[t].feature) max_feature = std::max(max_feature, f);
  }
  if (max_feature >= features.cols()) {
    fail(ErrorKind::ColumnMismatch, "model references a feature column that is not present");
  }
  Signal scores = Signal::Zero(features.rows());
  for (Index r = 0; r < features.rows(); ++r) {
    double sum = 0.0;
    const auto row = features.row(r);
    for (std::size_t t = 0; t < n_trees; ++t) sum += model.trees[t].predict(row);
    scores[r] = sum / static_cast<double>(n_trees);
  }
  return scores;
}

Signal predict_proba(const TrainedForest& model, const Eigen::MatrixXd& features) {
  return predict_proba_prefix(model, features, model.trees.size());
}

void save_forest(const TrainedForest& model, const std::filesystem::path& path) {
  json trees = json::array();
  for (const auto& t : model.trees) {
    trees.push_back({{"feature", t.feature},
                     {"threshold", t.threshold},
                     {"left", t.left},
                     {"right", t.right},
                     {"value", t.value}});
  }
  const json doc = {{"format", "fwbench-forest"},
                    {"version", 1},
                    {"seed", model.seed},
                    {"feature_names", model.feature_names},
                    {"hyperparams",
                     {{"n_estimators", model.hyperparams.n_estimators},
                      {"max_depth", model.hyperparams.max_depth},
                      {"max_features", model.hyperparams.max_features},
                      {"max_samples", model.hyperparams.max_samples}}},
                    {"trees", trees}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << doc.dump() << '\n';
}

TrainedForest load_forest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  TrainedForest model;
  try {
    const json doc = json::parse(in);
    if (doc.at("format").get<std::string>() != "fwbench-forest" || doc.at("version").get<int>() != 1) {
      fail(ErrorKind::MalformedInput, path.string() + ": unsupported model format");
    }
    model.seed = doc.at("seed").get<std::uint64_t>();
    model.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    const auto& hp = doc.at("hyperparams");
    model.hyperparams = {hp.at("n_estimators").get<int>(), hp.at("max_depth").get<int>(),
                         hp.at("max_features").get<int>(), hp.at("max_samples").get<double>()};
    for (const auto& t : doc.at("trees")) {
      DecisionTree tree;
      tree.feature = t.at("feature").get<std::vector<int>>();
      tree.threshold = t.at("threshold").get<std::vector<double>>();
      tree.left = t.at("left").get<std::vector<int>>();
      tree.right = t.at("right").get<std::vector<int>>();
      tree.value = t.at("value").get<std::vector<double>>();
      const std::size_t nodes = tree.feature.size();
      if (nodes == 0 || tree.threshold.size() != nodes || tree.left.size() != nodes ||
          tree.right.size() != nodes || tree.value.size() != nodes) {
        fail(ErrorKind::MalformedInput, path.string() + ": inconsistent tree arrays");
      }
      for (std::size_t i = 0; i < nodes; ++i) {
        if (tree.feature[i] < 0) continue;
        const auto in_range = [&](int c) { return c > static_cast<int>(i) && c < static_cast<int>(nodes); };
        if (!in_range(tree.left[i]) || !in_range(tree.right[i])) {
          fail(ErrorKind::MalformedInput, path.string() + ": invalid child index");
        }
      }
      model.trees.push_back(std::move(tree));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::MalformedInput, path.string() + ": " + e.what());
  }
  return model;
}

}  // namespace fwbench
