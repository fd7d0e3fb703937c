#pragma once

#include <array>
#include <optional>
#include <vector>

namespace fwbench {

struct MannWhitneyResult {
  double u = 0.0;  ///< U of the first sample: pairs a > b plus half the ties
  double p = 1.0;  ///< two-sided
  bool exact = false;
};

/// Exact two-sided p-value from the full permutation distribution of the
/// midrank sum when the smaller sample has at most `exact_limit` values;
/// otherwise the tie-corrected normal approximation with continuity
/// correction.
MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t exact_limit = 8);

inline constexpr double kSignificance = 0.05;

/// Age bands [0, 60), [60, 75) and [75, inf).
inline constexpr std::array<int, 2> kAgeCuts{60, 75};

/// Indices of the input grouped by age band; entries without an age are
/// left out.
std::array<std::vector<std::size_t>, 3> stratify_age(const std::vector<std::optional<int>>& ages);

int age_group(int age);

struct BoxStats {
  std::size_t n = 0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};

/// Quartiles by linear interpolation; n = 0 leaves the rest zero.
BoxStats box_stats(const std::vector<double>& values);

}  // namespace fwbench
