#include "fwbench/spectral.hpp"

#include "fwbench/error.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

namespace fwbench {

Signal hamming(Index n) {
  Signal w(n);
  for (Index i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n));
  }
  return w;
}

PowerSpectrum welch_psd(const SignalRef& x, double fs, Index segment_len, double overlap) {
  if (segment_len < 2) fail(ErrorKind::InvalidArgument, "Welch segment must hold at least 2 samples");
  if (x.size() < segment_len) {
    fail(ErrorKind::SignalTooShort, "signal shorter than one Welch segment (" +
                                        std::to_string(segment_len) + " samples)");
  }
  const auto step =
      std::max<Index>(1, segment_len - static_cast<Index>(std::lround(overlap * segment_len)));
  const Index segments = (x.size() - segment_len) / step + 1;
  const Index bins = segment_len / 2 + 1;

  const Signal window = hamming(segment_len);
  const double scale = 1.0 / (fs * window.squaredNorm());

  Eigen::FFT<double> fft;
  std::vector<double> buffer(static_cast<std::size_t>(segment_len));
  std::vector<std::complex<double>> spectrum;
  Signal accum = Signal::Zero(bins);
  for (Index s = 0; s < segments; ++s) {
    const Index offset = s * step;
    for (Index i = 0; i < segment_len; ++i) {
      buffer[static_cast<std::size_t>(i)] = x[offset + i] * window[i];
    }
    fft.fwd(spectrum, buffer);
    for (Index k = 0; k < bins; ++k) accum[k] += std::norm(spectrum[static_cast<std::size_t>(k)]);
  }

  PowerSpectrum psd;
  psd.segment_len = segment_len;
  psd.overlap = overlap;
  psd.density = accum * (scale / static_cast<double>(segments));
  // One-sided: fold negative frequencies onto all bins except DC and Nyquist.
  const Index last = (segment_len % 2 == 0) ? bins - 1 : bins;
  for (Index k = 1; k < last; ++k) psd.density[k] *= 2.0;
  psd.frequencies.resize(bins);
  for (Index k = 0; k < bins; ++k) {
    psd.frequencies[k] = fs * static_cast<double>(k) / static_cast<double>(segment_len);
  }
  return psd;
}

PowerSpectrum welch_psd(const FwaveSignal& d, Index segment_len) {
  return welch_psd(d.d, d.fs, segment_len, 0.5);
}

double integrate(const PowerSpectrum& psd, double a, double b) {
  const Signal& f = psd.frequencies;
  const Signal& p = psd.density;
  if (f.size() < 2 || !(b > a)) return 0.0;
  a = std::max(a, f[0]);
  b = std::min(b, f[f.size() - 1]);
  double sum = 0.0;
  for (Index k = 0; k + 1 < f.size(); ++k) {
    const double lo = std::max(a, f[k]);
    const double hi = std::min(b, f[k + 1]);
    if (!(hi > lo)) continue;
    const double width = f[k + 1] - f[k];
    auto interp = [&](double x) { return p[k] + (p[k + 1] - p[k]) * (x - f[k]) / width; };
    sum += 0.5 * (interp(lo) + interp(hi)) * (hi - lo);
  }
  return sum;
}

SpectralFeatures compute_spectral_features(const PowerSpectrum& psd) {
  SpectralFeatures out;
  const Signal& f = psd.frequencies;
  const Signal& p = psd.density;
  Index best = -1;
  for (Index k = 0; k < f.size(); ++k) {
    if (f[k] < kAtrialBandLow || f[k] > kAtrialBandHigh) continue;
    if (best < 0 || p[k] > p[best]) best = k;
  }
  if (best >= 0) {
    out.daf = f[best];
    out.p_daf = p[best];
  }
  const double nyquist = f.size() ? f[f.size() - 1] : 0.0;
  out.p_in = integrate(psd, kAtrialBandLow, kAtrialBandHigh);
  out.p_out = integrate(psd, 0.0, kAtrialBandLow) + integrate(psd, kAtrialBandHigh, nyquist);
  return out;
}

std::optional<double> compute_app(const FwaveSignal& d) {
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  bool any = false;
  for (Index i = 0; i < d.d.size(); ++i) {
    if (d.qrs_mask.size() == d.d.size() && d.qrs_mask[i]) continue;
    hi = std::max(hi, d.d[i]);
    lo = std::min(lo, d.d[i]);
    any = true;
  }
  if (!any) return std::nullopt;
  return hi - lo;
}

FeatureVector featurize_window(const FwaveSignal& d, Index segment_len) {
  FeatureVector fv;
  fv.method = d.method;
  fv.a_pp = compute_app(d);
  const SpectralFeatures sf = compute_spectral_features(welch_psd(d, segment_len));
  fv.daf = sf.daf;
  fv.p_daf = sf.p_daf;
  fv.p_in = sf.p_in;
  fv.p_out = sf.p_out;
  return fv;
}

}  // namespace fwbench
