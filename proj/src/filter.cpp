#include "fwbench/filter.hpp"

#include "fwbench/error.hpp"

#include <cmath>
#include <numbers>

namespace fwbench {

namespace {

constexpr double kButterQ = std::numbers::sqrt2 / 2.0;

void check_cutoff(double f, double fs, const char* what) {
  if (!(f > 0.0) || !(f < fs / 2.0)) {
    fail(ErrorKind::InvalidArgument, std::string(what) + " must lie in (0, fs/2)");
  }
}

}  // namespace

Biquad<double> butter_lowpass(double cutoff, double fs) {
  check_cutoff(cutoff, fs, "low-pass cutoff");
  const double k = std::tan(std::numbers::pi * cutoff / fs);
  const double norm = 1.0 / (1.0 + k / kButterQ + k * k);
  Biquad<double> s;
  s.b0 = k * k * norm;
  s.b1 = 2.0 * s.b0;
  s.b2 = s.b0;
  s.a1 = 2.0 * (k * k - 1.0) * norm;
  s.a2 = (1.0 - k / kButterQ + k * k) * norm;
  return s;
}

Biquad<double> butter_highpass(double cutoff, double fs) {
  check_cutoff(cutoff, fs, "high-pass cutoff");
  const double k = std::tan(std::numbers::pi * cutoff / fs);
  const double norm = 1.0 / (1.0 + k / kButterQ + k * k);
  Biquad<double> s;
  s.b0 = norm;
  s.b1 = -2.0 * norm;
  s.b2 = norm;
  s.a1 = 2.0 * (k * k - 1.0) * norm;
  s.a2 = (1.0 - k / kButterQ + k * k) * norm;
  return s;
}

Biquad<double> iir_notch(double freq, double fs, double quality) {
  check_cutoff(freq, fs, "notch frequency");
  const double k = std::tan(std::numbers::pi * freq / fs);
  const double norm = 1.0 / (1.0 + k / quality + k * k);
  Biquad<double> s;
  s.b0 = (1.0 + k * k) * norm;
  s.b1 = 2.0 * (k * k - 1.0) * norm;
  s.b2 = s.b0;
  s.a1 = s.b1;
  s.a2 = (1.0 - k / quality + k * k) * norm;
  return s;
}

Index significant_length(const Cascade<double>& cascade, Index max_len) {
  Signal impulse = Signal::Zero(max_len);
  impulse[0] = 1.0;
  const Signal h = filter_once(cascade, impulse, 0.0);
  const double peak = h.cwiseAbs().maxCoeff();
  if (peak == 0.0) return 1;
  Index last = 0;
  for (Index i = 0; i < h.size(); ++i) {
    if (std::abs(h[i]) > 1e-4 * peak) last = i;
  }
  return last + 1;
}

double effective_high_cutoff(const FilterSpec& spec, double fs) {
  return std::min(spec.high_cutoff, 0.45 * fs);
}

Signal bandpass(const SignalRef& signal, double fs, const FilterSpec& spec) {
  if (signal.size() < kMinFilterLength) {
    fail(ErrorKind::SignalTooShort, "band-pass needs at least " +
                                        std::to_string(kMinFilterLength) + " samples");
  }
  if (spec.order != 2) fail(ErrorKind::InvalidArgument, "only second-order filters are supported");
  const double high = effective_high_cutoff(spec, fs);
  if (!(spec.low_cutoff > 0.0) || !(spec.low_cutoff < high)) {
    fail(ErrorKind::InvalidArgument, "band-pass cutoffs must satisfy 0 < low < high < fs/2");
  }
  const Cascade<double> cascade{butter_highpass(spec.low_cutoff, fs), butter_lowpass(high, fs)};
  return filtfilt(cascade, signal, 3 * significant_length(cascade));
}

Signal notch(const SignalRef& signal, double fs, double notch_freq) {
  if (!(notch_freq < fs / 2.0)) {
    fail(ErrorKind::InvalidArgument, "notch frequency must be below Nyquist");
  }
  const Cascade<double> cascade{iir_notch(notch_freq, fs)};
  return filtfilt(cascade, signal, 3 * significant_length(cascade));
}

Signal preprocess(const SignalRef& signal, double fs, const FilterSpec& spec) {
  Signal y = bandpass(signal, fs, spec);
  if (spec.notch_freq) y = notch(y, fs, *spec.notch_freq);
  return y;
}

}  // namespace fwbench
