#pragma once

#include "fwbench/types.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <vector>

namespace fwbench {

/// Normalized second-order section: a0 == 1.
template <typename Scalar>
struct Biquad {
  Scalar b0 = 1, b1 = 0, b2 = 0;
  Scalar a1 = 0, a2 = 0;

  /// Steady-state transposed-direct-form-II state for a unit step input.
  std::array<Scalar, 2> step_state() const {
    const Scalar den = Scalar(1) + a1 + a2;
    const Scalar gain = (b0 + b1 + b2) / den;
    const Scalar z1 = gain - b0;
    const Scalar z2 = b2 - a2 * gain;
    return {z1, z2};
  }
};

template <typename Scalar>
using Cascade = std::vector<Biquad<Scalar>>;

/// Butterworth second-order sections via the bilinear transform with
/// frequency prewarping. Cutoffs in Hz.
Biquad<double> butter_lowpass(double cutoff, double fs);
Biquad<double> butter_highpass(double cutoff, double fs);
Biquad<double> iir_notch(double freq, double fs, double quality = 30.0);

/// Length (samples) after which the cascade's impulse response stays below
/// 1e-4 of its peak.
Index significant_length(const Cascade<double>& cascade, Index max_len = 200000);

/// Single causal pass, starting from the steady state of `initial` (the value
/// the input is assumed to have held before sample 0).
template <typename Derived>
SignalT<typename Derived::Scalar> filter_once(const Cascade<typename Derived::Scalar>& cascade,
                                              const Eigen::MatrixBase<Derived>& x,
                                              typename Derived::Scalar initial) {
  using Scalar = typename Derived::Scalar;
  SignalT<Scalar> y = x;
  Scalar level = initial;
  for (const auto& s : cascade) {
    auto [z1, z2] = s.step_state();
    z1 *= level;
    z2 *= level;
    for (Index n = 0; n < y.size(); ++n) {
      const Scalar in = y[n];
      const Scalar out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      y[n] = out;
    }
    // Steady-state output level of this section feeds the next one.
    level *= (s.b0 + s.b1 + s.b2) / (Scalar(1) + s.a1 + s.a2);
  }
  return y;
}

/// Forward-backward (zero-phase) filtering with odd-reflection padding of
/// `pad` samples on each side (clamped to size()-1).
template <typename Derived>
SignalT<typename Derived::Scalar> filtfilt(const Cascade<typename Derived::Scalar>& cascade,
                                           const Eigen::MatrixBase<Derived>& x, Index pad) {
  using Scalar = typename Derived::Scalar;
  const Index n = x.size();
  if (n == 0) return SignalT<Scalar>();
  pad = std::clamp<Index>(pad, 0, n - 1);

  SignalT<Scalar> ext(n + 2 * pad);
  for (Index i = 0; i < pad; ++i) {
    ext[i] = Scalar(2) * x[0] - x[pad - i];
    ext[n + pad + i] = Scalar(2) * x[n - 1] - x[n - 2 - i];
  }
  ext.segment(pad, n) = x;

  SignalT<Scalar> fwd = filter_once(cascade, ext, ext[0]);
  SignalT<Scalar> rev = fwd.reverse();
  SignalT<Scalar> back = filter_once(cascade, rev, rev[0]);
  return back.reverse().segment(pad, n);
}

/// Band-pass/notch configuration applied before detection and extraction.
struct FilterSpec {
  double low_cutoff = 0.67;
  double high_cutoff = 100.0;
  std::optional<double> notch_freq;
  int order = 2;
};

/// Upper edge actually used: min(high_cutoff, 0.45 fs).
double effective_high_cutoff(const FilterSpec& spec, double fs);

/// Minimum input length accepted by bandpass().
inline constexpr Index kMinFilterLength = 100;

/// Zero-phase second-order Butterworth band-pass (high-pass and low-pass
/// sections run forward and backward).
Signal bandpass(const SignalRef& signal, double fs, const FilterSpec& spec = {});

/// Zero-phase IIR notch.
Signal notch(const SignalRef& signal, double fs, double notch_freq);

/// bandpass() followed by notch() when the spec asks for one.
Signal preprocess(const SignalRef& signal, double fs, const FilterSpec& spec = {});

}  // namespace fwbench
