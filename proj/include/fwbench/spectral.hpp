#pragma once

#include "fwbench/extract.hpp"
#include "fwbench/types.hpp"

#include <array>
#include <optional>
#include <string>

namespace fwbench {

/// One-sided Welch power spectral density on the grid k * fs / segment_len,
/// k = 0 .. segment_len / 2. Units: mV^2/Hz.
struct PowerSpectrum {
  Signal frequencies;
  Signal density;
  Index segment_len = 0;
  double overlap = 0.5;

  double resolution() const { return frequencies.size() > 1 ? frequencies[1] : 0.0; }
};

inline constexpr double kAtrialBandLow = 4.0;
inline constexpr double kAtrialBandHigh = 12.0;
inline constexpr Index kDefaultWelchSegment = 1024;

/// Periodic Hamming window of length n.
Signal hamming(Index n);

/// Mean of Hamming-windowed periodograms over 50 %-overlapped segments
/// (no detrending). Integrating the density over [0, fs/2] returns the
/// signal's mean power up to windowing bias.
PowerSpectrum welch_psd(const SignalRef& x, double fs, Index segment_len = kDefaultWelchSegment,
                        double overlap = 0.5);
PowerSpectrum welch_psd(const FwaveSignal& d, Index segment_len = kDefaultWelchSegment);

/// Integral of the piecewise-linear interpolant of the spectrum over [a, b].
double integrate(const PowerSpectrum& psd, double a, double b);

struct SpectralFeatures {
  double daf = 0.0;    ///< Hz, location of the largest in-band bin
  double p_daf = 0.0;  ///< density at daf
  double p_in = 0.0;   ///< power inside [4, 12] Hz
  double p_out = 0.0;  ///< power in [0, 4) and (12, fs/2]
};

SpectralFeatures compute_spectral_features(const PowerSpectrum& psd);

/// Peak-to-peak amplitude over the samples outside the QRS mask; empty when
/// every sample is masked.
std::optional<double> compute_app(const FwaveSignal& d);

inline constexpr std::array<const char*, 5> kFeatureNames{"a_pp", "daf", "p_daf", "p_in", "p_out"};

struct FeatureVector {
  std::optional<double> a_pp;
  double daf = 0.0;
  double p_daf = 0.0;
  double p_in = 0.0;
  double p_out = 0.0;
  Method method = Method::Abs;

  bool complete() const { return a_pp.has_value(); }
  /// Feature values in kFeatureNames order; requires complete().
  std::array<double, 5> values() const { return {*a_pp, daf, p_daf, p_in, p_out}; }
};

FeatureVector featurize_window(const FwaveSignal& d, Index segment_len = kDefaultWelchSegment);

}  // namespace fwbench
