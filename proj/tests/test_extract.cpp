#include "fwbench/error.hpp"
#include "fwbench/extract.hpp"
#include "fwbench/filter.hpp"
#include "fwbench/qrs.hpp"
#include "fwbench/sim.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace fwbench;

namespace {

constexpr double kFs = 200.0;
constexpr Index kN = 12000;

// RMS of v over the samples flagged in mask.
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

Eigen::Array<bool, Eigen::Dynamic, 1> span_mask(const BeatMatrix& m, Index n) {
  Eigen::Array<bool, Eigen::Dynamic, 1> in = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n, false);
  for (Index b = 0; b < m.count(); ++b) in.segment(m.lo[b], m.hi[b] - m.lo[b]).setConstant(true);
  return in;
}

// A realistic noisy AF minute with its detections.
fwtest::Ensemble simulated_window() {
  SimConfig cfg;
  cfg.af_burden = 1.0;
  cfg.noise_rms = 50.0;
  cfg.seed = 99;
  cfg.duration = 60;
  const SimRecord rec = simulate_record(cfg);
  fwtest::Ensemble e;
  e.x = preprocess(rec.ecg, cfg.fs);
  e.qrs = detect_qrs(e.x, cfg.fs);
  return e;
}

}  // namespace

TEST(BeatMatrix, RegularBeatsShape) {
  const auto e = fwtest::repeated_beats(kN, kFs, 200, {1.0}, {1.0}, 100);
  ASSERT_EQ(e.qrs.size(), 60u);
  const BeatMatrix m = build_beat_matrix(e.x, e.qrs);
  EXPECT_EQ(m.count(), 60);
  EXPECT_EQ(m.length(), 140);
  EXPECT_EQ(m.r_offset, 50);
  for (Index s : m.shifts) EXPECT_EQ(s, 0);
}

TEST(BeatMatrix, OneBeatIsAnError) {
  const QrsAnnotations one{{500}, kFs};
  try {
    build_beat_matrix(Signal::Zero(kN), one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooFewBeats);
  }
}

TEST(BeatMatrix, ShiftsStayInRangeAndRecoverOffsets) {
  auto e = fwtest::repeated_beats(kN, kFs, 180);
  // Misplace every third annotation by 4 samples; alignment should undo it.
  for (std::size_t b = 0; b < e.qrs.size(); b += 3) e.qrs.r_peaks[b] += 4;
  const BeatMatrix m = build_beat_matrix(e.x, e.qrs);
  for (std::size_t b = 0; b < e.qrs.size(); ++b) {
    EXPECT_LE(std::abs(m.shifts[b]), 10);
    if (b % 3 == 0 && b > 0 && b + 1 < e.qrs.size()) {
      EXPECT_EQ(m.shifts[b], -4) << b;
    }
  }
}

TEST(Abs, IdenticalBeatsCancel) {
  const auto e = fwtest::repeated_beats(kN, kFs, 170);
  const FwaveSignal d = extract_abs(e.x, e.qrs);
  const BeatMatrix m = build_beat_matrix(e.x, e.qrs);
  EXPECT_LT(masked_rms(d.d, span_mask(m, kN)), 0.01 * 1.0);
}

TEST(Abs, RecoversIncommensurateSine) {
  auto e = fwtest::repeated_beats(kN, kFs, 173);
  const Signal f = fwtest::sine(kN, 6.0, kFs, 0.05);
  const FwaveSignal d = extract_abs(e.x + f, e.qrs);
  EXPECT_GE(fwtest::correlation(d.d, f, !d.qrs_mask), 0.99);
}

TEST(Abs, ZeroSignal) {
  const QrsAnnotations q{{100, 300, 500, 700, 900}, kFs};
  for (Method m : kAllMethods) EXPECT_EQ(extract(m, Signal::Zero(kN), q).d.cwiseAbs().maxCoeff(), 0.0);
}

TEST(AbsSc1, AmplitudeModulatedBeats) {
  const auto e = fwtest::repeated_beats(kN, kFs, 170, {1.0, 1.2, 0.8}, {1.0, 1.2, 0.8});
  const BeatMatrix m = build_beat_matrix(e.x, e.qrs);
  const auto spans = span_mask(m, kN);
  const double sc1 = masked_rms(extract_abs_sc1(e.x, e.qrs).d, spans);
  const double abs = masked_rms(extract_abs(e.x, e.qrs).d, spans);
  EXPECT_LT(sc1, 0.01);
  EXPECT_GT(abs, sc1);
}

TEST(AbsSc1, ConstantBeatsHaveUnitScale) {
  const auto e = fwtest::repeated_beats(kN, kFs, 170);
  for (double a : extract_abs_sc1(e.x, e.qrs).scales) EXPECT_NEAR(a, 1.0, 1e-6);
}

TEST(AbsSc1, ZeroTemplateKeepsUnitScale) {
  const QrsAnnotations q{{100, 300, 500, 700}, kFs};
  const FwaveSignal d = extract_abs_sc1(Signal::Zero(kN), q);
  for (double a : d.scales) EXPECT_EQ(a, 1.0);
  EXPECT_EQ(d.d.cwiseAbs().maxCoeff(), 0.0);
}

TEST(AbsSc1, ScaleClamped) {
  // Beats 0..2 are plain, beat 3 is inverted: its least-squares gain is
  // negative and must be clamped to zero.
  // Alignment is disabled so the inverted beat cannot slide onto its S wave.
  auto e = fwtest::repeated_beats(kN, kFs, 170, {1.0, 1.0, 1.0, -1.0}, {1.0, 1.0, 1.0, -1.0});
  ExtractParams p;
  p.max_shift = 0;
  const FwaveSignal d = extract_abs_sc1(e.x, e.qrs, p);
  for (double a : d.scales) {
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 3.0);
  }
  EXPECT_EQ(d.scales[3], 0.0);
}

TEST(AbsSc2, IndependentQrsAndTModulation) {
  const auto e = fwtest::repeated_beats(kN, kFs, 170, {1.0, 1.3, 0.9, 1.15}, {1.0, 0.7, 1.2, 0.85});
  const BeatMatrix m = build_beat_matrix(e.x, e.qrs);
  const auto spans = span_mask(m, kN);
  const double sc2 = masked_rms(extract_abs_sc2(e.x, e.qrs).d, spans);
  const double sc1 = masked_rms(extract_abs_sc1(e.x, e.qrs).d, spans);
  EXPECT_LT(sc2, 0.02);
  EXPECT_GT(sc1, sc2);
}

TEST(AbsSc2, UniformScalingMatchesSc1) {
  const auto e = fwtest::repeated_beats(kN, kFs, 170, {1.0, 1.2}, {1.0, 1.2});
  const Signal d1 = extract_abs_sc1(e.x, e.qrs).d;
  const Signal d2 = extract_abs_sc2(e.x, e.qrs).d;
  EXPECT_LT(std::sqrt((d2 - d1).squaredNorm() / kN), 0.01);
}

TEST(TsPca, ScalarModulationPlusSine) {
  // Beat-to-beat variability dominates the ensemble variance, so the leading
  // components describe the QRST and not the sine.
  auto e = fwtest::repeated_beats(kN, kFs, 173, {1.0, 1.15, 0.9, 1.05, 0.8}, {1.0, 1.15, 0.9, 1.05, 0.8});
  const Signal f = fwtest::sine(kN, 6.0, kFs, 0.01);
  const Signal x = e.x + f;
  const FwaveSignal pca = extract_ts_pca(x, e.qrs);
  const FwaveSignal abs = extract_abs(x, e.qrs);
  EXPECT_FALSE(pca.fell_back_to_abs);
  EXPECT_EQ(pca.components, 1);

  // With 68 beats the sample cross-covariance between modulation and sine
  // tilts the first component a little, which caps the correlation near 0.987.
  const double corr = fwtest::correlation(pca.d, f, !pca.qrs_mask);
  EXPECT_GE(corr, 0.98);
  EXPECT_GT(corr, fwtest::correlation(abs.d, f, !abs.qrs_mask));

  // Scalar modulation is exactly the ABS_sc1 model, so only plain ABS is a
  // fair reference here.
  EXPECT_LT(masked_rms(pca.d - f, pca.qrs_mask), masked_rms(abs.d - f, pca.qrs_mask));
}

TEST(TsPca, IdenticalBeatsCancel) {
  const auto e = fwtest::repeated_beats(kN, kFs, 170);
  const FwaveSignal d = extract_ts_pca(e.x, e.qrs);
  const BeatMatrix m = build_beat_matrix(e.x, e.qrs);
  EXPECT_LT(masked_rms(d.d, span_mask(m, kN)), 0.01);
}

TEST(TsPca, FewBeatsFallBackToAbs) {
  const QrsAnnotations q{{100, 300, 500}, kFs};
  const Signal x = fwtest::repeated_beats(1000, kFs, 200, {1.0}, {1.0}, 100).x;
  const FwaveSignal pca = extract_ts_pca(x, q);
  EXPECT_TRUE(pca.fell_back_to_abs);
  EXPECT_EQ(pca.method, Method::TsPca);
  EXPECT_EQ(pca.d, extract_abs(x, q).d);
}

TEST(TsPca, ComponentCountCapped) {
  const auto e = simulated_window();
  const FwaveSignal d = extract_ts_pca(e.x, e.qrs);
  EXPECT_GE(d.components, 1);
  EXPECT_LE(d.components, 3);
}

TEST(Extract, OutsideBeatSpansUnchanged) {
  const auto e = simulated_window();
  const BeatMatrix m = build_beat_matrix(e.x, e.qrs);
  const auto spans = span_mask(m, e.x.size());
  for (Method method : kAllMethods) {
    const Signal d = extract(method, e.x, e.qrs).d;
    ASSERT_EQ(d.size(), e.x.size());
    for (Index i = 0; i < d.size(); ++i) {
      if (!spans[i]) {
        ASSERT_EQ(d[i], e.x[i]) << to_string(method) << " sample " << i;
      }
    }
  }
}

TEST(Extract, AmplitudeEquivariant) {
  const auto e = simulated_window();
  for (double c : {0.5, 3.0, 1e-3}) {
    for (Method method : kAllMethods) {
      const Signal d = extract(method, e.x, e.qrs).d;
      const Signal dc = extract(method, c * e.x, e.qrs).d;
      EXPECT_LE((dc - c * d).cwiseAbs().maxCoeff(), 1e-9 * c * d.cwiseAbs().maxCoeff()) << to_string(method);
    }
  }
}

TEST(Extract, Deterministic) {
  const auto e = simulated_window();
  for (Method method : kAllMethods) EXPECT_EQ(extract(method, e.x, e.qrs).d, extract(method, e.x, e.qrs).d);
}

TEST(Extract, ResidualOrderingOnModulatedEnsembles) {
  const auto amp = fwtest::repeated_beats(kN, kFs, 171, {1.0, 1.25, 0.8, 1.1}, {1.0, 1.25, 0.8, 1.1});
  const auto indep = fwtest::repeated_beats(kN, kFs, 171, {1.0, 1.25, 0.8, 1.1}, {1.0, 0.75, 1.2, 0.9});
  const auto mask_a = qrs_interval_mask(kN, amp.qrs.r_peaks, kFs);
  const auto mask_i = qrs_interval_mask(kN, indep.qrs.r_peaks, kFs);
  const double abs = masked_rms(extract_abs(amp.x, amp.qrs).d, mask_a);
  const double sc1 = masked_rms(extract_abs_sc1(amp.x, amp.qrs).d, mask_a);
  const double pca = masked_rms(extract_ts_pca(amp.x, amp.qrs).d, mask_a);
  EXPECT_GE(abs, sc1);
  EXPECT_LE(pca, abs);
  const double sc1_i = masked_rms(extract_abs_sc1(indep.x, indep.qrs).d, mask_i);
  const double sc2_i = masked_rms(extract_abs_sc2(indep.x, indep.qrs).d, mask_i);
  EXPECT_GE(sc1_i, sc2_i);
}

TEST(Extract, MethodNames) {
  for (Method m : kAllMethods) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_THROW(parse_method("PCA"), Error);
}

TEST(QrsMask, NinetyMillisecondsEachSide) {
  const auto mask = qrs_interval_mask(1000, {500}, 200.0);
  EXPECT_EQ(mask.count(), 37);
  EXPECT_TRUE(mask[482]);
  EXPECT_TRUE(mask[518]);
  EXPECT_FALSE(mask[481]);
  EXPECT_FALSE(mask[519]);
}
