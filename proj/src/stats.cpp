#include "fwbench/stats.hpp"

#include "fwbench/error.hpp"
#include "fwbench/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fwbench {

namespace {

struct Ranked {
  std::vector<double> ranks;  ///< midranks, pooled a then b
  double tie_term = 0.0;      ///< sum of t^3 - t over tie groups
};

Ranked midranks(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<std::size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return pooled[x] < pooled[y]; });
  Ranked r;
  r.ranks.resize(pooled.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r.ranks[order[k]] = mid;
    const auto t = static_cast<double>(j - i + 1);
    r.tie_term += t * t * t - t;
    i = j + 1;
  }
  return r;
}

// Permutation distribution of twice the rank sum of a random m-subset.
// counts[k][s]: number of k-subsets of the items seen so far with sum s.
double exact_p(const std::vector<double>& ranks, std::size_t m, double observed_sum) {
  std::vector<long> twice(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) twice[i] = std::lround(2.0 * ranks[i]);
  const long total = std::accumulate(twice.begin(), twice.end(), 0L);
  std::vector<long> sorted = twice;
  std::sort(sorted.rbegin(), sorted.rend());
  const long max_sum = std::accumulate(sorted.begin(), sorted.begin() + static_cast<long>(m), 0L);

  std::vector<std::vector<double>> counts(m + 1, std::vector<double>(static_cast<std::size_t>(max_sum) + 1, 0.0));
  counts[0][0] = 1.0;
  for (long r : twice) {
    for (std::size_t k = m; k >= 1; --k) {
      auto& dst = counts[k];
      const auto& src = counts[k - 1];
      for (long s = max_sum; s >= r; --s) dst[static_cast<std::size_t>(s)] += src[static_cast<std::size_t>(s - r)];
    }
  }
  // Under H0 the expected doubled sum is m * total / N.
  const double n = static_cast<double>(ranks.size());
  const double centre = static_cast<double>(m) * static_cast<double>(total) / n;
  const double dev = std::abs(2.0 * observed_sum - centre);
  double extreme = 0.0;
  double all = 0.0;
  for (long s = 0; s <= max_sum; ++s) {
    const double c = counts[m][static_cast<std::size_t>(s)];
    if (c == 0.0) continue;
    all += c;
    if (std::abs(static_cast<double>(s) - centre) >= dev - 1e-9) extreme += c;
  }
  return std::min(1.0, extreme / all);
}

}  // namespace

MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t exact_limit) {
  if (a.empty() || b.empty()) fail(ErrorKind::InvalidArgument, "Mann-Whitney test needs two non-empty samples");
  const Ranked r = midranks(a, b);
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  const double rank_sum_a = std::accumulate(r.ranks.begin(), r.ranks.begin() + static_cast<long>(a.size()), 0.0);

  MannWhitneyResult out;
  out.u = rank_sum_a - na * (na + 1.0) / 2.0;
  if (std::min(a.size(), b.size()) <= exact_limit) {
    out.exact = true;
    // Enumerate over the smaller sample; the two-sided p is the same.
    if (a.size() <= b.size()) {
      out.p = exact_p(r.ranks, a.size(), rank_sum_a);
    } else {
      std::vector<double> swapped(r.ranks.begin() + static_cast<long>(a.size()), r.ranks.end());
      swapped.insert(swapped.end(), r.ranks.begin(), r.ranks.begin() + static_cast<long>(a.size()));
      const double rank_sum_b = std::accumulate(swapped.begin(), swapped.begin() + static_cast<long>(b.size()), 0.0);
      out.p = exact_p(swapped, b.size(), rank_sum_b);
    }
    return out;
  }
  const double n = na + nb;
  const double mean = na * nb / 2.0;
  const double var = na * nb / 12.0 * ((n + 1.0) - r.tie_term / (n * (n - 1.0)));
  if (var <= 0.0) {
    out.p = 1.0;
    return out;
  }
  const double z = std::max(0.0, std::abs(out.u - mean) - 0.5) / std::sqrt(var);
  out.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return out;
}

int age_group(int age) {
  if (age < kAgeCuts[0]) return 0;
  if (age < kAgeCuts[1]) return 1;
  return 2;
}

std::array<std::vector<std::size_t>, 3> stratify_age(const std::vector<std::optional<int>>& ages) {
  std::array<std::vector<std::size_t>, 3> groups;
  for (std::size_t i = 0; i < ages.size(); ++i) {
    if (ages[i]) groups[static_cast<std::size_t>(age_group(*ages[i]))].push_back(i);
  }
  return groups;
}

BoxStats box_stats(const std::vector<double>& values) {
  BoxStats s;
  s.n = values.size();
  if (values.empty()) return s;
  s.q1 = quantile(values, 0.25);
  s.median = quantile(values, 0.5);
  s.q3 = quantile(values, 0.75);
  return s;
}

}  // namespace fwbench
