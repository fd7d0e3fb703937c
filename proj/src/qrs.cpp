#include "fwbench/qrs.hpp"

#include "fwbench/error.hpp"
#include "fwbench/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>

namespace fwbench {

QrsAnnotations QrsAnnotations::slice(Index begin, Index end) const {
  QrsAnnotations out;
  out.fs = fs;
  auto lo = std::lower_bound(r_peaks.begin(), r_peaks.end(), begin);
  auto hi = std::lower_bound(r_peaks.begin(), r_peaks.end(), end);
  for (auto it = lo; it != hi; ++it) out.r_peaks.push_back(*it - begin);
  return out;
}

namespace {

Signal band(const SignalRef& x, double fs, double lo, double hi) {
  const Cascade<double> cascade{butter_highpass(lo, fs), butter_lowpass(hi, fs)};
  return filtfilt(cascade, x, 3 * significant_length(cascade));
}

/// Centered moving average over `width` samples (edges average what exists).
Signal moving_average(const Signal& x, Index width) {
  const Index n = x.size();
  Signal cumsum(n + 1);
  cumsum[0] = 0.0;
  for (Index i = 0; i < n; ++i) cumsum[i + 1] = cumsum[i] + x[i];
  const Index half = width / 2;
  Signal y(n);
  for (Index i = 0; i < n; ++i) {
    const Index lo = std::max<Index>(0, i - half);
    const Index hi = std::min<Index>(n, i - half + width);
    y[i] = (cumsum[hi] - cumsum[lo]) / static_cast<double>(hi - lo);
  }
  return y;
}

std::vector<Index> local_maxima(const Signal& x) {
  std::vector<Index> peaks;
  for (Index i = 1; i + 1 < x.size(); ++i) {
    if (x[i] > x[i - 1] && x[i] >= x[i + 1]) peaks.push_back(i);
  }
  return peaks;
}

Index argmax_abs(const SignalRef& x, Index center, Index half) {
  const Index lo = std::max<Index>(0, center - half);
  const Index hi = std::min<Index>(x.size() - 1, center + half);
  Index best = lo;
  for (Index i = lo + 1; i <= hi; ++i) {
    if (std::abs(x[i]) > std::abs(x[best])) best = i;
  }
  return best;
}

/// Moves each detection onto the signal extremum and enforces the
/// refractory distance, keeping the larger of two colliding peaks.
std::vector<Index> localize(const SignalRef& x, std::vector<Index> marks, double fs,
                            double refractory_s) {
  const Index half = static_cast<Index>(std::lround(0.05 * fs));
  for (auto& m : marks) m = argmax_abs(x, m, half);
  std::sort(marks.begin(), marks.end());
  marks.erase(std::unique(marks.begin(), marks.end()), marks.end());

  const auto refractory = static_cast<Index>(std::ceil(refractory_s * fs));
  std::vector<Index> out;
  for (Index m : marks) {
    if (!out.empty() && m - out.back() < refractory) {
      if (std::abs(x[m]) > std::abs(x[out.back()])) out.back() = m;
      continue;
    }
    out.push_back(m);
  }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(
      std::clamp(std::floor(q * static_cast<double>(values.size() - 1)), 0.0,
                 static_cast<double>(values.size() - 1)));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

}  // namespace

QrsAnnotations detect_qrs(const SignalRef& signal, double fs) {
  const Index n = signal.size();
  if (n < static_cast<Index>(2.0 * fs)) {
    fail(ErrorKind::SignalTooShort, "QRS detection needs at least 2 s of signal");
  }

  const Signal bp = band(signal, fs, 5.0, 15.0);
  Signal deriv = Signal::Zero(n);
  for (Index i = 2; i + 2 < n; ++i) {
    deriv[i] = (2.0 * bp[i + 2] + bp[i + 1] - bp[i - 1] - 2.0 * bp[i - 2]) * fs / 8.0;
  }
  const Signal squared = deriv.array().square();
  const Signal mwi = moving_average(squared, static_cast<Index>(std::lround(0.15 * fs)));

  const auto refractory = static_cast<Index>(std::lround(0.2 * fs));
  const auto t_wave_window = static_cast<Index>(std::lround(0.36 * fs));
  const auto slope_half = static_cast<Index>(std::lround(0.075 * fs));

  auto max_slope = [&](Index c) {
    const Index lo = std::max<Index>(0, c - slope_half);
    const Index hi = std::min<Index>(n, c + slope_half + 1);
    return deriv.segment(lo, hi - lo).cwiseAbs().maxCoeff();
  };

  const Index init_len = std::min<Index>(n, static_cast<Index>(2.0 * fs));
  double spki = 0.25 * mwi.head(init_len).maxCoeff();
  double npki = 0.5 * mwi.head(init_len).mean();
  double thr1 = npki + 0.25 * (spki - npki);
  double thr2 = 0.5 * thr1;
  auto update_thresholds = [&] {
    thr1 = npki + 0.25 * (spki - npki);
    thr2 = 0.5 * thr1;
  };

  std::vector<Index> beats;
  std::vector<Index> noise_peaks;
  double last_slope = 0.0;

  auto rr_average = [&]() {
    if (beats.size() < 2) return fs;
    const std::size_t k = std::min<std::size_t>(8, beats.size() - 1);
    double sum = 0.0;
    for (std::size_t i = beats.size() - k; i < beats.size(); ++i) {
      sum += static_cast<double>(beats[i] - beats[i - 1]);
    }
    return sum / static_cast<double>(k);
  };

  // Re-examines noise peaks in (last beat + refractory, limit) whenever the
  // current gap exceeds 166% of the running RR average.
  auto search_back = [&](Index limit) {
    while (!beats.empty() && static_cast<double>(limit - beats.back()) > 1.66 * rr_average()) {
      Index best = -1;
      for (auto it = noise_peaks.rbegin(); it != noise_peaks.rend() && *it > beats.back(); ++it) {
        const Index p = *it;
        if (p <= beats.back() + refractory || p >= limit) continue;
        if (mwi[p] > thr2 && (best < 0 || mwi[p] > mwi[best])) best = p;
      }
      if (best < 0) break;
      beats.push_back(best);
      last_slope = max_slope(best);
      spki = 0.25 * mwi[best] + 0.75 * spki;
      update_thresholds();
    }
  };

  // f-waves pass the 5-15 Hz band and ripple the integrator output; only a
  // maximum that dominates half an integration window either side counts.
  const auto reach = static_cast<Index>(std::lround(0.075 * fs));
  std::vector<Index> candidates;
  for (Index c : local_maxima(mwi)) {
    const Index lo = std::max<Index>(0, c - reach);
    const Index hi = std::min<Index>(n, c + reach + 1);
    if (mwi[c] >= mwi.segment(lo, hi - lo).maxCoeff()) candidates.push_back(c);
  }

  for (Index c : candidates) {
    // A larger ripple inside the refractory period takes over the beat.
    if (!beats.empty() && c - beats.back() < refractory) {
      if (mwi[c] > mwi[beats.back()]) {
        beats.back() = c;
        last_slope = std::max(last_slope, max_slope(c));
      }
      continue;
    }
    search_back(c);
    if (!beats.empty() && c - beats.back() < refractory) continue;

    bool is_qrs = mwi[c] > thr1;
    if (is_qrs && !beats.empty() && c - beats.back() < t_wave_window) {
      if (max_slope(c) < 0.5 * last_slope) is_qrs = false;
    }
    if (is_qrs) {
      beats.push_back(c);
      last_slope = max_slope(c);
      spki = 0.125 * mwi[c] + 0.875 * spki;
    } else {
      noise_peaks.push_back(c);
      npki = 0.125 * mwi[c] + 0.875 * npki;
    }
    update_thresholds();
  }
  search_back(n);

  QrsAnnotations out;
  out.fs = fs;
  out.r_peaks = localize(signal, std::move(beats), fs, 0.2);
  return out;
}

QrsAnnotations detect_qrs_secondary(const SignalRef& signal, double fs) {
  const Index n = signal.size();
  if (n < static_cast<Index>(2.0 * fs)) {
    fail(ErrorKind::SignalTooShort, "QRS detection needs at least 2 s of signal");
  }

  const Signal bp = band(signal, fs, 10.0, std::min(25.0, 0.45 * fs));
  const Signal energy =
      moving_average(bp.array().square().matrix(), static_cast<Index>(std::lround(0.12 * fs)));

  // Threshold per 10 s block; a short tail block is merged into its neighbour.
  const auto block = static_cast<Index>(10.0 * fs);
  std::vector<Index> edges{0};
  for (Index b = block; b < n; b += block) edges.push_back(b);
  if (edges.size() > 1 && n - edges.back() < static_cast<Index>(2.0 * fs)) edges.pop_back();
  edges.push_back(n);

  Signal threshold(n);
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    const Index lo = edges[b];
    const Index len = edges[b + 1] - lo;
    std::vector<double> values(energy.data() + lo, energy.data() + lo + len);
    const double thr = std::max(0.3 * percentile(values, 0.98), 5.0 * percentile(values, 0.5));
    threshold.segment(lo, len).setConstant(thr);
  }

  std::vector<Index> candidates;
  for (Index c : local_maxima(energy)) {
    if (energy[c] > threshold[c]) candidates.push_back(c);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](Index a, Index b) { return energy[a] > energy[b]; });

  const auto refractory = static_cast<Index>(std::ceil(0.25 * fs));
  std::set<Index> taken;
  for (Index c : candidates) {
    auto next = taken.lower_bound(c);
    if (next != taken.end() && *next - c < refractory) continue;
    if (next != taken.begin() && c - *std::prev(next) < refractory) continue;
    taken.insert(c);
  }
  std::vector<Index> accepted(taken.begin(), taken.end());

  QrsAnnotations out;
  out.fs = fs;
  out.r_peaks = localize(signal, std::move(accepted), fs, 0.25);
  return out;
}

double compute_bsqi(const QrsAnnotations& a, const QrsAnnotations& b, double tol) {
  const double fs = a.fs > 0.0 ? a.fs : b.fs;
  const std::size_t total = a.size() + b.size();
  if (total == 0) return 0.0;
  const double max_dist = tol * fs;

  struct Pair {
    Index dist, first, second;
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  std::size_t start = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    while (start < b.size() && static_cast<double>(a.r_peaks[i] - b.r_peaks[start]) > max_dist) {
      ++start;
    }
    for (std::size_t j = start; j < b.size(); ++j) {
      const Index d = b.r_peaks[j] - a.r_peaks[i];
      if (static_cast<double>(d) > max_dist) break;
      if (static_cast<double>(std::abs(d)) <= max_dist) {
        pairs.push_back({std::abs(d), std::min(a.r_peaks[i], b.r_peaks[j]),
                         std::max(a.r_peaks[i], b.r_peaks[j]), i, j});
      }
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& p, const Pair& q) {
    return std::tie(p.dist, p.first, p.second) < std::tie(q.dist, q.first, q.second);
  });

  std::vector<bool> used_a(a.size(), false), used_b(b.size(), false);
  std::size_t matched = 0;
  for (const auto& p : pairs) {
    if (used_a[p.i] || used_b[p.j]) continue;
    used_a[p.i] = used_b[p.j] = true;
    ++matched;
  }
  return static_cast<double>(matched) / static_cast<double>(total - matched);
}

}  // namespace fwbench
