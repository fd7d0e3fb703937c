#include "fwbench/evaluate.hpp"

#include "fwbench/error.hpp"
#include "fwbench/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace fwbench {

namespace {

constexpr const char* kFeatureHeader = "record_id,lead,window_idx,method,label,a_pp,daf,p_daf,p_in,p_out";

void append_number(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

double parse_number(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    fail(ErrorKind::MalformedInput, where + ": not a number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

void write_feature_table(const FeatureTable& table, const std::filesystem::path& path) {
  std::string out = std::string(kFeatureHeader) + "\n";
  for (const auto& row : table) {
    out += row.record_id;
    out += ',';
    out += row.lead;
    out += ',';
    out += std::to_string(row.window_idx);
    out += ',';
    out += to_string(row.method);
    out += ',';
    out += to_string(row.label);
    out += ',';
    if (row.features.a_pp) {
      append_number(out, *row.features.a_pp);
    } else {
      out += "NA";
    }
    for (double v : {row.features.daf, row.features.p_daf, row.features.p_in, row.features.p_out}) {
      out += ',';
      append_number(out, v);
    }
    out += '\n';
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) fail(ErrorKind::Io, "cannot write " + path.string());
  file << out;
}

FeatureTable read_feature_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::MalformedInput, path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kFeatureHeader) fail(ErrorKind::MalformedInput, path.string() + ": unexpected header");

  FeatureTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != 10) fail(ErrorKind::MalformedInput, where + ": expected 10 columns");
    FeatureRow row;
    row.record_id = cells[0];
    row.lead = cells[1];
    row.window_idx = static_cast<Index>(parse_number(cells[2], where));
    row.method = parse_method(cells[3]);
    if (cells[4] == "AF") {
      row.label = WindowLabel::AF;
    } else if (cells[4] == "NON_AF") {
      row.label = WindowLabel::NonAF;
    } else {
      fail(ErrorKind::MalformedInput, where + ": unknown label '" + cells[4] + "'");
    }
    row.features.method = row.method;
    if (cells[5] != "NA") row.features.a_pp = parse_number(cells[5], where);
    row.features.daf = parse_number(cells[6], where);
    row.features.p_daf = parse_number(cells[7], where);
    row.features.p_in = parse_number(cells[8], where);
    row.features.p_out = parse_number(cells[9], where);
    table.push_back(std::move(row));
  }
  return table;
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Dataset out;
  out.x.resize(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Index>(i)) = x.row(rows[i]);
    out.y.push_back(y[static_cast<std::size_t>(rows[i])]);
    out.record_ids.push_back(record_ids[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

Dataset to_dataset(const FeatureTable& rows) {
  Dataset out;
  std::vector<const FeatureRow*> usable;
  for (const auto& r : rows) {
    if (r.features.complete()) usable.push_back(&r);
  }
  out.x.resize(static_cast<Index>(usable.size()), 5);
  for (std::size_t i = 0; i < usable.size(); ++i) {
    const auto v = usable[i]->features.values();
    for (Index c = 0; c < 5; ++c) out.x(static_cast<Index>(i), c) = v[static_cast<std::size_t>(c)];
    out.y.push_back(usable[i]->label == WindowLabel::AF ? 1 : 0);
    out.record_ids.push_back(usable[i]->record_id);
  }
  return out;
}

namespace {

struct RecordStrata {
  std::vector<std::string> ids;  ///< first-appearance order
  std::vector<std::vector<Index>> rows;
  std::vector<bool> has_af;
  std::vector<bool> has_non_af;
};

RecordStrata group_records(const Dataset& data) {
  RecordStrata s;
  std::unordered_map<std::string, std::size_t> index;
  for (Index r = 0; r < data.size(); ++r) {
    const auto& id = data.record_ids[static_cast<std::size_t>(r)];
    auto [it, inserted] = index.emplace(id, s.ids.size());
    if (inserted) {
      s.ids.push_back(id);
      s.rows.emplace_back();
      s.has_af.push_back(false);
      s.has_non_af.push_back(false);
    }
    s.rows[it->second].push_back(r);
    if (data.y[static_cast<std::size_t>(r)] == 1) {
      s.has_af[it->second] = true;
    } else {
      s.has_non_af[it->second] = true;
    }
  }
  return s;
}

bool both_classes(const std::vector<int>& y) {
  const auto pos = std::count(y.begin(), y.end(), 1);
  return pos > 0 && pos < static_cast<std::ptrdiff_t>(y.size());
}

void require_classes(const RecordStrata& s, std::size_t min_records, const char* what) {
  const auto af = static_cast<std::size_t>(std::count(s.has_af.begin(), s.has_af.end(), true));
  const auto non_af =
      static_cast<std::size_t>(std::count(s.has_non_af.begin(), s.has_non_af.end(), true));
  if (af < min_records || non_af < min_records) {
    fail(ErrorKind::InsufficientData,
         std::string(what) + " needs at least " + std::to_string(min_records) +
             " records with AF windows and as many with non-AF windows (have " +
             std::to_string(af) + " and " + std::to_string(non_af) + ")");
  }
}

}  // namespace

TrainTestSplit split_train_test(const Dataset& data, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) fail(ErrorKind::InvalidArgument, "split ratio must be in (0, 1)");
  const RecordStrata s = group_records(data);
  require_classes(s, 2, "train/test split");

  std::vector<std::size_t> with_af, without_af;
  for (std::size_t i = 0; i < s.ids.size(); ++i) (s.has_af[i] ? with_af : without_af).push_back(i);

  constexpr int kAttempts = 100;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    std::vector<bool> in_train(s.ids.size(), false);
    for (auto* stratum : {&with_af, &without_af}) {
      std::vector<std::size_t> order = *stratum;
      std::shuffle(order.begin(), order.end(), rng);
      const auto size = static_cast<double>(order.size());
      auto n_train = static_cast<std::size_t>(std::llround(ratio * size));
      if (order.size() >= 2) n_train = std::clamp<std::size_t>(n_train, 1, order.size() - 1);
      for (std::size_t i = 0; i < n_train && i < order.size(); ++i) in_train[order[i]] = true;
    }
    TrainTestSplit split;
    std::vector<Index> train_rows, test_rows;
    for (std::size_t i = 0; i < s.ids.size(); ++i) {
      auto& dst = in_train[i] ? train_rows : test_rows;
      dst.insert(dst.end(), s.rows[i].begin(), s.rows[i].end());
      (in_train[i] ? split.train_records : split.test_records).push_back(s.ids[i]);
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(test_rows.begin(), test_rows.end());
    split.train = data.subset(train_rows);
    split.test = data.subset(test_rows);
    if (both_classes(split.train.y) && both_classes(split.test.y)) return split;
  }
  fail(ErrorKind::InsufficientData, "could not draw a split with both classes on each side");
}

double compute_auroc(const SignalRef& scores, const std::vector<int>& labels) {
  const Index n = scores.size();
  if (static_cast<Index>(labels.size()) != n) {
    fail(ErrorKind::LengthMismatch, "scores and labels differ in length");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  double n_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[static_cast<std::size_t>(order[k])] == 1) {
        rank_sum_pos += midrank;
        n_pos += 1.0;
      }
    }
    i = j + 1;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) fail(ErrorKind::SingleClass, "AUROC needs both classes");
  const double u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
  return u / (n_pos * n_neg);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) fail(ErrorKind::InvalidArgument, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

AurocSummary bootstrap_auroc(const SignalRef& scores, const std::vector<int>& labels, int n_rounds,
                             std::uint64_t seed) {
  if (n_rounds < 1) fail(ErrorKind::InvalidArgument, "bootstrap needs at least one round");
  if (!both_classes(labels)) fail(ErrorKind::SingleClass, "test set contains a single class");
  const Index n = scores.size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> draw(0, n - 1);
  std::vector<double> aucs;
  aucs.reserve(static_cast<std::size_t>(n_rounds));
  Signal s(n);
  std::vector<int> y(static_cast<std::size_t>(n));
  while (static_cast<int>(aucs.size()) < n_rounds) {
    for (Index i = 0; i < n; ++i) {
      const Index k = draw(rng);
      s[i] = scores[k];
      y[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(k)];
    }
    if (!both_classes(y)) continue;  // redraw
    aucs.push_back(compute_auroc(s, y));
  }
  AurocSummary out;
  out.rounds = n_rounds;
  out.median = quantile(aucs, 0.5);
  out.ci_low = quantile(aucs, 0.025);
  out.ci_high = quantile(aucs, 0.975);
  return out;
}

AurocSummary bootstrap_auroc(const TrainedForest& model, const Dataset& test, int n_rounds,
                             std::uint64_t seed) {
  return bootstrap_auroc(predict_proba(model, test.x), test.y, n_rounds, seed);
}

GridSearchResult grid_search_cv(const Dataset& train, const RfGrid& grid, int k, std::uint64_t seed,
                                int threads) {
  if (k < 2) fail(ErrorKind::InvalidArgument, "cross-validation needs k >= 2");
  if (grid.size() == 0) fail(ErrorKind::InvalidArgument, "empty hyperparameter grid");
  const RecordStrata s = group_records(train);
  require_classes(s, static_cast<std::size_t>(k), "cross-validation");

  // Record-level folds: shuffle each stratum and deal records round-robin.
  std::vector<int> fold_of(s.ids.size(), 0);
  {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> with_af, without_af;
    for (std::size_t i = 0; i < s.ids.size(); ++i) (s.has_af[i] ? with_af : without_af).push_back(i);
    int next = 0;
    for (auto* stratum : {&with_af, &without_af}) {
      std::shuffle(stratum->begin(), stratum->end(), rng);
      for (std::size_t i : *stratum) fold_of[i] = next++ % k;
    }
  }
  std::vector<Dataset> fold_train(static_cast<std::size_t>(k)), fold_val(static_cast<std::size_t>(k));
  std::vector<bool> fold_ok(static_cast<std::size_t>(k), false);
  for (int f = 0; f < k; ++f) {
    std::vector<Index> tr, va;
    for (std::size_t i = 0; i < s.ids.size(); ++i) {
      auto& dst = fold_of[i] == f ? va : tr;
      dst.insert(dst.end(), s.rows[i].begin(), s.rows[i].end());
    }
    std::sort(tr.begin(), tr.end());
    std::sort(va.begin(), va.end());
    fold_train[static_cast<std::size_t>(f)] = train.subset(tr);
    fold_val[static_cast<std::size_t>(f)] = train.subset(va);
    fold_ok[static_cast<std::size_t>(f)] = both_classes(fold_train[static_cast<std::size_t>(f)].y) &&
                                           both_classes(fold_val[static_cast<std::size_t>(f)].y);
  }
  if (std::none_of(fold_ok.begin(), fold_ok.end(), [](bool b) { return b; })) {
    fail(ErrorKind::InsufficientData, "no cross-validation fold holds both classes");
  }

  // One forest per (depth, features, samples, fold) with the largest
  // estimator count; smaller counts are evaluated on its tree prefixes.
  std::vector<int> estimators = grid.n_estimators;
  std::sort(estimators.begin(), estimators.end());
  estimators.erase(std::unique(estimators.begin(), estimators.end()), estimators.end());
  const int n_max = estimators.back();

  struct Combo {
    int depth, features;
    double samples;
  };
  std::vector<Combo> combos;
  for (int d : grid.max_depth) {
    for (int mf : grid.max_features) {
      for (double ms : grid.max_samples) combos.push_back({d, mf, ms});
    }
  }
  const std::size_t n_tasks = combos.size() * static_cast<std::size_t>(k);
  // auc[task][e] for estimator count estimators[e]
  std::vector<std::vector<double>> auc(n_tasks, std::vector<double>(estimators.size(), 0.0));

  parallel_for(n_tasks, threads, [&](std::size_t task) {
    const std::size_t c = task / static_cast<std::size_t>(k);
    const auto f = static_cast<std::size_t>(task % static_cast<std::size_t>(k));
    if (!fold_ok[f]) return;
    const RfHyperparams hp{n_max, combos[c].depth, combos[c].features, combos[c].samples};
    const TrainedForest forest =
        train_forest(fold_train[f].x, fold_train[f].y, hp, derive_seed(seed, 1000 + f));
    const Dataset& val = fold_val[f];
    Signal cumulative = Signal::Zero(val.size());
    std::size_t e = 0;
    for (std::size_t t = 0; t < forest.trees.size() && e < estimators.size(); ++t) {
      for (Index r = 0; r < val.size(); ++r) cumulative[r] += forest.trees[t].predict(val.x.row(r));
      if (static_cast<int>(t + 1) == estimators[e]) {
        auc[task][e] = compute_auroc(cumulative / static_cast<double>(t + 1), val.y);
        ++e;
      }
    }
  });

  const auto valid_folds = static_cast<double>(std::count(fold_ok.begin(), fold_ok.end(), true));
  GridSearchResult result;
  struct Candidate {
    RfHyperparams hp;
    double score;
    std::size_t grid_pos;
  };
  std::vector<Candidate> candidates;
  std::size_t pos = 0;
  for (int n_est : grid.n_estimators) {
    const auto e = static_cast<std::size_t>(
        std::lower_bound(estimators.begin(), estimators.end(), n_est) - estimators.begin());
    for (std::size_t c = 0; c < combos.size(); ++c) {
      double sum = 0.0;
      for (int f = 0; f < k; ++f) {
        if (fold_ok[static_cast<std::size_t>(f)]) sum += auc[c * static_cast<std::size_t>(k) + static_cast<std::size_t>(f)][e];
      }
      const RfHyperparams hp{n_est, combos[c].depth, combos[c].features, combos[c].samples};
      const double score = sum / valid_folds;
      result.scores.emplace_back(hp, score);
      candidates.push_back({hp, score, pos++});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.hp.n_estimators != b.hp.n_estimators) return a.hp.n_estimators < b.hp.n_estimators;
    if (a.hp.max_depth != b.hp.max_depth) return a.hp.max_depth < b.hp.max_depth;
    return a.grid_pos < b.grid_pos;
  });
  const Candidate* best = &candidates.front();
  for (const auto& cand : candidates) {
    if (cand.score > best->score) best = &cand;
  }
  result.best = best->hp;
  result.best_score = best->score;
  return result;
}

const MethodScore* RankingReport::find(Method m, const std::string& lead) const {
  for (const auto& s : scores) {
    if (s.method == m && s.lead == lead) return &s;
  }
  return nullptr;
}

RankingReport rank_methods(const std::vector<MethodScore>& scores) {
  RankingReport report;
  report.scores = scores;

  std::vector<std::string> leads;
  for (const auto& s : scores) {
    if (std::find(leads.begin(), leads.end(), s.lead) == leads.end()) leads.push_back(s.lead);
  }
  std::vector<Method> methods;
  for (Method m : kAllMethods) {
    if (std::any_of(scores.begin(), scores.end(), [&](const MethodScore& s) { return s.method == m; })) {
      methods.push_back(m);
    }
  }

  std::vector<double> rank_sum(methods.size(), 0.0);
  std::vector<int> rank_count(methods.size(), 0);
  std::vector<int> firsts(methods.size(), 0);
  for (const auto& lead : leads) {
    LeadRanking lr;
    lr.lead = lead;
    std::vector<const MethodScore*> entries;
    for (const auto& s : scores) {
      if (s.lead == lead) entries.push_back(&s);
    }
    std::stable_sort(entries.begin(), entries.end(), [](const MethodScore* a, const MethodScore* b) {
      if (a->auroc.median != b->auroc.median) return a->auroc.median > b->auroc.median;
      return static_cast<int>(a->method) < static_cast<int>(b->method);
    });
    for (std::size_t i = 0; i < entries.size(); ++i) {
      int rank = static_cast<int>(i) + 1;
      if (i > 0 && entries[i]->auroc.median == entries[i - 1]->auroc.median) rank = lr.rank.back();
      lr.order.push_back(entries[i]->method);
      lr.rank.push_back(rank);
    }
    lr.tie_at_top = lr.rank.size() >= 2 && lr.rank[1] == 1;
    for (std::size_t i = 0; i < lr.order.size(); ++i) {
      const auto mi = static_cast<std::size_t>(
          std::find(methods.begin(), methods.end(), lr.order[i]) - methods.begin());
      rank_sum[mi] += lr.rank[i];
      rank_count[mi] += 1;
      if (lr.rank[i] == 1 && !lr.tie_at_top) firsts[mi] += 1;
    }
    report.per_lead.push_back(std::move(lr));
  }

  std::vector<std::size_t> idx(methods.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<double> mean(methods.size(), 0.0);
  for (std::size_t i = 0; i < methods.size(); ++i) {
    mean[i] = rank_count[i] ? rank_sum[i] / rank_count[i] : 0.0;
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const bool a_all = firsts[a] == static_cast<int>(leads.size());
    const bool b_all = firsts[b] == static_cast<int>(leads.size());
    if (a_all != b_all) return a_all;
    return mean[a] < mean[b];
  });
  for (std::size_t i : idx) {
    report.overall.push_back(methods[i]);
    report.mean_rank.push_back(mean[i]);
  }
  report.overall_best_in_every_lead =
      !idx.empty() && !leads.empty() && firsts[idx.front()] == static_cast<int>(leads.size());
  return report;
}

}  // namespace fwbench
