// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include "fwbench/bench.hpp"
#include "fwbench/extract.hpp"
#include "fwbench/qrs.hpp"
#include "fwbench/sim.hpp"
#include "fwbench/spectral.hpp"
#include "fwbench/stats.hpp"
#include "test_util.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

using namespace fwbench;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  std::string problems;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      problems += (problems.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

// ---- simulated benchmark runs shared by 1 to 3

struct SimRun {
  BenchResult result;
  double seconds = 0.0;
};

SimRun run_simulated(double noise_rms) {
  BenchConfig cfg;
  cfg.simulate = SimulationSpec{100, noise_rms, 300.0, 1};
  cfg.seed = 1;
  const auto t0 = std::chrono::steady_clock::now();
  SimRun run;
  run.result = run_pipeline(cfg);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

double median_of(const BenchResult& r, Method m) {
  for (const auto& s : r.methods) {
    if (s.method == m) return s.auroc.median;
  }
  return -1.0;
}

std::string medians(const BenchResult& r) {
  std::string s;
  for (const auto& m : r.methods) s += std::string(to_string(m.method)) + "=" + fmt(m.auroc.median) + " ";
  return s;
}

Outcome criterion1(const SimRun& noisy) {
  Outcome o;
  const double pca = median_of(noisy.result, Method::TsPca);
  o.require(pca >= 0.90, "TS_PCA median below 0.90");
  for (Method m : {Method::Abs, Method::AbsSc1, Method::AbsSc2}) {
    o.require(pca > median_of(noisy.result, m), "TS_PCA not above " + std::string(to_string(m)));
  }
  o.require(noisy.seconds <= 600.0, "runtime over 10 min");
  o.detail = medians(noisy.result) + "runtime=" + fmt(noisy.seconds) + "s";
  return o;
}

Outcome criterion2(const SimRun& clean) {
  Outcome o;
  for (Method m : kAllMethods) {
    o.require(median_of(clean.result, m) >= 0.93, std::string(to_string(m)) + " below 0.93");
  }
  o.detail = medians(clean.result);
  return o;
}

Outcome criterion3(const SimRun& noisy, double noise_rms) {
  Outcome o;
  std::string values;
  const RmsRow* pca = nullptr;
  for (const auto& r : noisy.result.rms) {
    if (r.method == Method::TsPca) pca = &r;
    values += std::string(to_string(r.method)) + "=" + fmt(r.inside) + "/" + fmt(r.outside) + " ";
  }
  o.require(pca != nullptr && noisy.result.rms.size() == 4, "missing RMS rows");
  if (pca) {
    for (const auto& r : noisy.result.rms) {
      if (r.method != Method::TsPca) o.require(pca->inside < r.inside, "TS_PCA inside not below " + std::string(to_string(r.method)));
      o.require(r.outside <= noise_rms + 10.0, std::string(to_string(r.method)) + " outside above limit");
    }
  }
  o.detail = "inside/outside uV: " + values;
  return o;
}

// ---- oracles

Outcome criterion4() {
  Outcome o;
  const double fs = 200.0;
  const Index n = 12000;

  FwaveSignal c;
  c.fs = fs;
  c.d.resize(n);
  for (Index i = 0; i < n; ++i) c.d[i] = 0.5 * std::cos(2 * std::numbers::pi * 6.0 * i / fs);
  c.qrs_mask.setConstant(n, false);
  const auto app = compute_app(c);
  o.require(app && *app == 1.0, "A_pp of unit peak-to-peak cosine is not exactly 1");

  const PowerSpectrum tone = welch_psd(fwtest::sine(n, 7.0, fs), fs);
  const SpectralFeatures tf = compute_spectral_features(tone);
  o.require(std::abs(tf.daf - 7.0) <= fs / static_cast<double>(kDefaultWelchSegment), "DAF of 7 Hz tone off by more than a bin");

  const Signal noise = fwtest::white_noise(n, 1.0, 17);
  const PowerSpectrum pn = welch_psd(noise, fs);
  const double total = integrate(pn, 0.0, fs / 2.0);
  const double variance = noise.squaredNorm() / static_cast<double>(n);
  o.require(std::abs(total - variance) <= 0.1 * variance, "Parseval off by more than 10%");

  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const PowerSpectrum p = welch_psd(fwtest::white_noise(n, 0.1, seed) + fwtest::sine(n, 5.0 + 0.1 * seed, fs, 0.05), fs,
                                      256 + 16 * static_cast<Index>(seed));
    const SpectralFeatures f = compute_spectral_features(p);
    const double t = integrate(p, 0.0, fs / 2.0);
    worst = std::max(worst, std::abs(f.p_in + f.p_out - t) / t);
  }
  o.require(worst <= 1e-9, "band powers do not partition the total");
  o.detail = "daf=" + fmt(tf.daf) + " parseval=" + fmt(total / variance) + " partition=" + fmt(worst, 3);
  return o;
}

double pairwise_auroc(const Signal& s, const std::vector<int>& y) {
  double num = 0, den = 0;
  for (Index i = 0; i < s.size(); ++i) {
    for (Index j = 0; j < s.size(); ++j) {
      if (y[static_cast<std::size_t>(i)] != 1 || y[static_cast<std::size_t>(j)] != 0) continue;
      den += 1;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return num / den;
}

Outcome criterion5() {
  Outcome o;
  Signal hand(4);
  hand << 0.1, 0.4, 0.35, 0.8;
  o.require(compute_auroc(hand, {0, 0, 1, 1}) == 0.75, "hand case is not 0.75");

  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> len(2, 60), level(0, 9);
  std::uniform_real_distribution<double> slope(0.1, 5.0);
  int bad = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = len(rng);
    Signal s(n);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[i] = level(rng) * 0.1;
      y[static_cast<std::size_t>(i)] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    const double a = compute_auroc(s, y);
    const double k = slope(rng);
    // element by element: a vectorised exp may round equal inputs differently
    Signal t(n), cube(n);
    for (int i = 0; i < n; ++i) {
      t[i] = 3.0 * std::exp(k * s[i]) - 1.0;
      cube[i] = s[i] * s[i] * s[i] + s[i];
    }
    if (compute_auroc(t, y) != a || compute_auroc(cube, y) != a || std::abs(a - pairwise_auroc(s, y)) > 1e-12) ++bad;
  }
  o.require(bad == 0, std::to_string(bad) + " of 1000 transformed cases disagree");
  o.detail = "1000 random monotone transforms checked";
  return o;
}

double u_of(const std::vector<double>& a, const std::vector<double>& b) {
  double u = 0.0;
  for (double x : a) {
    for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  }
  return u;
}

double enumerated_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pool(a);
  pool.insert(pool.end(), b.begin(), b.end());
  const double centre = static_cast<double>(a.size() * b.size()) / 2.0;
  const double observed = std::abs(u_of(a, b) - centre);
  std::vector<bool> pick(pool.size(), false);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(a.size()), true);
  double hit = 0, all = 0;
  do {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < pool.size(); ++i) (pick[i] ? x : y).push_back(pool[i]);
    all += 1;
    if (std::abs(u_of(x, y) - centre) >= observed - 1e-9) hit += 1;
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return hit / all;
}

Outcome criterion6() {
  Outcome o;
  const auto r = mann_whitney_u({1, 2, 3}, {10, 11, 12});
  o.require(r.p == 0.1 && r.exact, "{1,2,3} vs {10,11,12} p is not exactly 0.1");

  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> size(1, 7), value(0, 6);
  int bad = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> a(static_cast<std::size_t>(size(rng))), b(static_cast<std::size_t>(size(rng)));
    for (auto& v : a) v = value(rng);
    for (auto& v : b) v = value(rng);
    const auto ab = mann_whitney_u(a, b), ba = mann_whitney_u(b, a);
    if (std::abs(ab.p - enumerated_p(a, b)) > 1e-12 || ab.p != ba.p) ++bad;
  }
  o.require(bad == 0, std::to_string(bad) + " of 1000 random samples disagree");
  o.detail = "p=" + fmt(r.p) + "; 1000 random samples vs enumeration";
  return o;
}

template <typename Mask>
double masked_rms(const Signal& v, const Mask& mask) {
  double s = 0.0;
  Index n = 0;
  for (Index i = 0; i < v.size(); ++i) {
    if (mask[i]) {
      s += v[i] * v[i];
      ++n;
    }
  }
  return n ? std::sqrt(s / static_cast<double>(n)) : 0.0;
}

Outcome criterion7() {
  Outcome o;
  const double fs = 200.0;
  const Index n = 12000;

  auto base = fwtest::repeated_beats(n, fs, 173);
  const Signal sine = fwtest::sine(n, 6.0, fs, 0.05);
  const FwaveSignal d = extract_abs(base.x + sine, base.qrs);
  const double corr = fwtest::correlation(d.d, sine, !d.qrs_mask);
  o.require(corr >= 0.99, "ABS sine correlation below 0.99");

  const auto amp = fwtest::repeated_beats(n, fs, 171, {1.0, 1.25, 0.8, 1.1}, {1.0, 1.25, 0.8, 1.1});
  const auto mask_a = qrs_interval_mask(n, amp.qrs.r_peaks, fs);
  const double r_abs = masked_rms(extract_abs(amp.x, amp.qrs).d, mask_a);
  const double r_sc1 = masked_rms(extract_abs_sc1(amp.x, amp.qrs).d, mask_a);
  o.require(r_sc1 < r_abs, "ABS_sc1 residual not below ABS");

  const auto indep = fwtest::repeated_beats(n, fs, 171, {1.0, 1.25, 0.8, 1.1}, {1.0, 0.75, 1.2, 0.9});
  const auto mask_i = qrs_interval_mask(n, indep.qrs.r_peaks, fs);
  const double i_sc1 = masked_rms(extract_abs_sc1(indep.x, indep.qrs).d, mask_i);
  const double i_sc2 = masked_rms(extract_abs_sc2(indep.x, indep.qrs).d, mask_i);
  o.require(i_sc2 < i_sc1, "ABS_sc2 residual not below ABS_sc1");

  SimConfig cfg;
  cfg.af_burden = 1.0;
  cfg.noise_rms = 50.0;
  cfg.seed = 99;
  cfg.duration = 60;
  const SimRecord rec = simulate_record(cfg);
  const Signal x = preprocess(rec.ecg, cfg.fs);
  const QrsAnnotations q = detect_qrs(x, cfg.fs);
  double worst = 0.0;
  for (double c : {0.5, 3.0, 1e-3}) {
    for (Method m : kAllMethods) {
      const Signal base_d = extract(m, x, q).d;
      const Signal scaled = extract(m, c * x, q).d;
      worst = std::max(worst, (scaled - c * base_d).cwiseAbs().maxCoeff() / (c * base_d.cwiseAbs().maxCoeff()));
    }
  }
  o.require(worst <= 1e-9, "amplitude equivariance violated");
  o.detail = "corr=" + fmt(corr, 5) + " abs/sc1=" + fmt(r_abs) + "/" + fmt(r_sc1) + " sc1/sc2=" + fmt(i_sc1) + "/" +
             fmt(i_sc2) + " equivariance=" + fmt(worst, 3);
  return o;
}

Outcome criterion8() {
  Outcome o;
  std::size_t truth = 0, detected = 0, matched = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    const SimConfig cfg = dataset_config(i, 0.0, 8);
    const SimRecord rec = simulate_record(cfg);
    const QrsAnnotations q = detect_qrs(preprocess(rec.ecg, cfg.fs), cfg.fs);
    const auto tol = static_cast<Index>(std::lround(0.05 * cfg.fs));
    truth += rec.true_r_peaks.size();
    detected += q.r_peaks.size();
    // one-to-one greedy matching in time order
    std::size_t j = 0;
    for (Index r : rec.true_r_peaks) {
      while (j < q.r_peaks.size() && q.r_peaks[j] < r - tol) ++j;
      if (j < q.r_peaks.size() && q.r_peaks[j] <= r + tol) {
        ++matched;
        ++j;
      }
    }
  }
  const double se = static_cast<double>(matched) / static_cast<double>(truth);
  const double ppv = static_cast<double>(matched) / static_cast<double>(detected);
  o.require(se >= 0.99, "sensitivity below 99%");
  o.require(ppv >= 0.99, "precision below 99%");
  o.detail = "beats=" + std::to_string(truth) + " Se=" + fmt(se, 5) + " PPV=" + fmt(ppv, 5);
  return o;
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = s.str();
  }
  return out;
}

Outcome criterion9() {
  Outcome o;
  fwtest::TempDir tmp("determinism");
  BenchConfig cfg = parse_config(R"({
    "simulate": {"n_records": 30, "noise_rms": 80, "duration": 180, "seed": 9},
    "grid": {"n_estimators": [100, 200], "max_depth": [2, 4], "max_features": [2, 6], "max_samples": [0.5]},
    "bootstrap_rounds": 50, "seed": 9})");
  cfg.output = tmp.path() / "a";
  cmd_run(cfg);
  cfg.output = tmp.path() / "b";
  cmd_run(cfg);
  const auto a = tree_contents(tmp.path() / "a"), b = tree_contents(tmp.path() / "b");
  o.require(!a.empty() && a.count("report.json") == 1, "no report written");
  o.require(a.size() == b.size(), "different file sets");
  std::size_t differing = 0;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) ++differing;
  }
  o.require(differing == 0, std::to_string(differing) + " files differ");
  o.detail = std::to_string(a.size()) + " files compared";
  return o;
}

// Lead II, 8 minutes: NSR, AFL, NSR, AF/NSR halves, AF, 9 beats, noise-swamped NSR, NSR.
EcgRecord crafted_record() {
  const double fs = 200.0;
  const Index minute = 12000;
  const Index n = 8 * minute;
  Signal x = Signal::Zero(n);
  const auto beat = [&](Index r, bool with_t) {
    for (Index i = std::max<Index>(0, r - 60); i < std::min<Index>(n, r + 100); ++i) {
      const double t = static_cast<double>(i - r) / fs;
      x[i] += fwtest::qrs_part(t) + (with_t ? fwtest::t_part(t) : 0.0);
    }
  };
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> irregular(0.55, 1.1);
  for (Index m = 0; m < 8; ++m) {
    const Index lo = m * minute, hi = lo + minute;
    if (m == 5) {
      for (Index k = 0; k < 9; ++k) beat(lo + 300 + k * 1300, false);
      continue;
    }
    for (double t = 0.4; ; t += (m == 4 ? irregular(rng) : 0.8)) {
      const auto r = lo + static_cast<Index>(std::lround(t * fs));
      if (r >= hi - 100) break;
      beat(r, true);
    }
  }
  x.segment(6 * minute, minute) += fwtest::white_noise(minute, 0.6, 11);

  EcgRecord rec;
  rec.record_id = "crafted";
  rec.sampling_rate = 200;
  rec.leads.push_back({"II", x});
  rec.rhythm_intervals = {{0, minute, Rhythm::Other},
                          {minute, 2 * minute, Rhythm::AFL},
                          {2 * minute, 3 * minute + minute / 2, Rhythm::Other},
                          {3 * minute + minute / 2, 5 * minute, Rhythm::AF},
                          {5 * minute, n, Rhythm::Other}};
  return rec;
}

Outcome criterion10() {
  Outcome o;
  const EcgRecord rec = crafted_record();
  validate(rec);
  const ScreenedLead lead = screen_lead(rec, "II");
  const std::map<Index, ExclusionReason> expected{{1, ExclusionReason::Afl},
                                                  {3, ExclusionReason::MixedRhythm},
                                                  {5, ExclusionReason::TooFewQrs},
                                                  {6, ExclusionReason::LowBsqi}};
  o.require(lead.windows.size() == 8, "expected 8 windows");
  std::string seen;
  for (const auto& w : lead.windows) {
    seen += std::to_string(w.index) + ":" + (w.exclusion ? std::string(to_string(*w.exclusion)) : "ok") + " ";
    const auto it = expected.find(w.index);
    if (it == expected.end()) {
      o.require(w.included(), "window " + std::to_string(w.index) + " wrongly excluded");
    } else {
      o.require(w.exclusion == it->second, "window " + std::to_string(w.index) + " has the wrong reason");
    }
  }
  o.detail = seen;
  return o;
}

}  // namespace

int main() {
  int failures = 0;
  const auto report = [&](int id, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.problems = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << o.detail
              << (o.problems.empty() ? "" : " | " + o.problems) << std::endl;
  };

  constexpr double kNoise = 100.0;
  std::optional<SimRun> noisy, clean;
  try {
    noisy = run_simulated(kNoise);
    clean = run_simulated(0.0);
  } catch (const std::exception& e) {
    std::cerr << "simulated benchmark failed: " << e.what() << "\n";
  }
  const auto need = [](const std::optional<SimRun>& r) -> const SimRun& {
    if (!r) throw std::runtime_error("simulated benchmark did not complete");
    return *r;
  };
  report(1, [&] { return criterion1(need(noisy)); });
  report(2, [&] { return criterion2(need(clean)); });
  report(3, [&] { return criterion3(need(noisy), kNoise); });
  report(4, criterion4);
  report(5, criterion5);
  report(6, criterion6);
  report(7, criterion7);
  report(8, criterion8);
  report(9, criterion9);
  report(10, criterion10);
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : "all criteria passed") << std::endl;
  return failures ? 1 : 0;
}
