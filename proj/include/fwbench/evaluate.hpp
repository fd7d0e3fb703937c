#pragma once

#include "fwbench/extract.hpp"
#include "fwbench/forest.hpp"
#include "fwbench/record.hpp"
#include "fwbench/spectral.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fwbench {

/// One row of the feature table: the contract between extraction and the
/// classifier stage.
struct FeatureRow {
  std::string record_id;
  std::string lead;
  Index window_idx = 0;
  Method method = Method::Abs;
  WindowLabel label = WindowLabel::NonAF;
  FeatureVector features;
};

using FeatureTable = std::vector<FeatureRow>;

void write_feature_table(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable read_feature_table(const std::filesystem::path& path);

/// Rows with all five features present, as a design matrix plus 0/1 labels
/// (1 = AF) and record ids.
struct Dataset {
  Eigen::MatrixXd x;
  std::vector<int> y;
  std::vector<std::string> record_ids;

  Index size() const { return x.rows(); }
  Dataset subset(const std::vector<Index>& rows) const;
};

Dataset to_dataset(const FeatureTable& rows);

struct TrainTestSplit {
  Dataset train;
  Dataset test;
  std::vector<std::string> train_records;
  std::vector<std::string> test_records;
};

/// Record-level split stratified by whether a record contributes any AF
/// window. Each stratum is shuffled and round(ratio * size) records go to
/// training. Needs at least two records with AF windows and two without.
TrainTestSplit split_train_test(const Dataset& data, double ratio, std::uint64_t seed);

/// Probability that a random AF row outscores a random non-AF row, ties
/// counting one half.
double compute_auroc(const SignalRef& scores, const std::vector<int>& labels);

struct AurocSummary {
  double median = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int rounds = 0;
};

/// Percentile bootstrap over rows resampled with replacement.
AurocSummary bootstrap_auroc(const SignalRef& scores, const std::vector<int>& labels, int n_rounds,
                             std::uint64_t seed);
AurocSummary bootstrap_auroc(const TrainedForest& model, const Dataset& test, int n_rounds,
                             std::uint64_t seed);

/// Linear-interpolation percentile, q in [0, 1].
double quantile(std::vector<double> values, double q);

struct RfGrid {
  std::vector<int> n_estimators{100, 200, 300, 1000};
  std::vector<int> max_depth{1, 2, 3, 4, 5, 6};
  std::vector<int> max_features{2, 6};
  std::vector<double> max_samples{0.1, 0.3, 0.5, 0.7, 0.9};

  std::size_t size() const {
    return n_estimators.size() * max_depth.size() * max_features.size() * max_samples.size();
  }
};

struct GridSearchResult {
  RfHyperparams best;
  double best_score = 0.0;
  std::vector<std::pair<RfHyperparams, double>> scores;  ///< mean validation AUROC per point
};

/// Exhaustive k-fold search with record-level folds. Ties prefer fewer
/// estimators, then shallower trees, then grid order.
GridSearchResult grid_search_cv(const Dataset& train, const RfGrid& grid, int k, std::uint64_t seed,
                                int threads = 1);

struct MethodScore {
  Method method = Method::Abs;
  std::string lead;
  AurocSummary auroc;
};

struct LeadRanking {
  std::string lead;
  std::vector<Method> order;  ///< best first
  std::vector<int> rank;      ///< 1-based, parallel to order; equal medians share a rank
  bool tie_at_top = false;
};

struct RankingReport {
  std::vector<MethodScore> scores;
  std::vector<LeadRanking> per_lead;
  std::vector<Method> overall;  ///< best first (mean rank)
  std::vector<double> mean_rank;
  bool overall_best_in_every_lead = false;

  const MethodScore* find(Method m, const std::string& lead) const;
};

RankingReport rank_methods(const std::vector<MethodScore>& scores);

}  // namespace fwbench
