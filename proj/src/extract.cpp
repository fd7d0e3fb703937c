#include "fwbench/extract.hpp"

#include "fwbench/error.hpp"

#include <algorithm>
#include <cmath>

namespace fwbench {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Abs: return "ABS";
    case Method::AbsSc1: return "ABS_sc1";
    case Method::AbsSc2: return "ABS_sc2";
    case Method::TsPca: return "TS_PCA";
  }
  return "ABS";
}

Method parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  fail(ErrorKind::InvalidArgument, "unknown extraction method '" + std::string(name) + "'");
}

Eigen::Array<bool, Eigen::Dynamic, 1> qrs_interval_mask(Index n, const std::vector<Index>& r_peaks,
                                                        double fs, double half_width_s) {
  Eigen::Array<bool, Eigen::Dynamic, 1> mask = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n, false);
  const auto half = static_cast<Index>(std::lround(half_width_s * fs));
  for (Index r : r_peaks) {
    const Index lo = std::max<Index>(0, r - half);
    const Index hi = std::min<Index>(n - 1, r + half);
    for (Index i = lo; i <= hi; ++i) mask[i] = true;
  }
  return mask;
}

namespace {

void fill_rows(const SignalRef& x, BeatMatrix& m) {
  const Index rows = m.count();
  for (Index b = 0; b < rows; ++b) {
    for (Index j = 0; j < m.length(); ++j) {
      const Index idx = m.sample_index(b, j);
      const bool ok = idx >= m.lo[b] && idx < m.hi[b];
      m.present(b, j) = ok;
      m.beats(b, j) = ok ? x[idx] : 0.0;
    }
  }
}

/// Best integer shift of beat b against the template, scored by cosine
/// similarity over the QRS zone. Ties keep the smaller |shift|.
Index best_shift(const SignalRef& x, const BeatMatrix& m, const Signal& tmpl, Index b,
                 Index zone_lo, Index zone_hi, Index max_shift) {
  Index best = 0;
  double best_score = -2.0;
  for (Index step = 0; step <= 2 * max_shift; ++step) {
    const Index s = (step % 2 == 0) ? step / 2 : -(step + 1) / 2;
    double xt = 0.0, xx = 0.0, tt = 0.0;
    for (Index j = zone_lo; j <= zone_hi; ++j) {
      const Index idx = m.r_peaks[b] + s - m.r_offset + j;
      if (idx < m.lo[b] || idx >= m.hi[b]) continue;
      xt += x[idx] * tmpl[j];
      xx += x[idx] * x[idx];
      tt += tmpl[j] * tmpl[j];
    }
    const double denom = std::sqrt(xx * tt);
    const double score = denom > 0.0 ? xt / denom : 0.0;
    if (score > best_score) {
      best_score = score;
      best = s;
    }
  }
  return best;
}

}  // namespace

BeatMatrix build_beat_matrix(const SignalRef& window, const QrsAnnotations& qrs,
                             const ExtractParams& params) {
  if (qrs.size() < 2) fail(ErrorKind::TooFewBeats, "template subtraction needs at least 2 beats");
  const double fs = qrs.fs;
  if (!(fs > 0.0)) fail(ErrorKind::InvalidArgument, "QRS annotations carry no sampling rate");
  const Index n = window.size();

  BeatMatrix m;
  m.r_offset = static_cast<Index>(std::lround(params.beat_pre_s * fs));
  const Index length = m.r_offset + static_cast<Index>(std::lround(params.beat_post_s * fs));
  m.r_peaks = qrs.r_peaks;
  const auto rows = static_cast<Index>(m.r_peaks.size());

  m.lo.resize(rows);
  m.hi.resize(rows);
  for (Index b = 0; b < rows; ++b) {
    const Index r = m.r_peaks[b];
    m.lo[b] = std::max<Index>(0, r - m.r_offset);
    m.hi[b] = std::min<Index>(n, r - m.r_offset + length);
  }
  // Neighbouring beats split one third of the RR interval before the later R
  // (never more than the nominal pre-R span), so short RR intervals keep the
  // earlier beat's T-wave.
  for (Index b = 1; b < rows; ++b) {
    const Index gap = m.r_peaks[b] - m.r_peaks[b - 1];
    const Index split = m.r_peaks[b] - std::min<Index>(m.r_offset, gap / 3);
    m.hi[b - 1] = std::min(m.hi[b - 1], split);
    m.lo[b] = std::max(m.lo[b], split);
  }

  m.shifts.assign(static_cast<std::size_t>(rows), 0);
  m.beats.resize(rows, length);
  m.present.resize(rows, length);
  fill_rows(window, m);

  const auto q = static_cast<Index>(std::lround(params.qrs_half_width_s * fs));
  const Index zone_lo = std::max<Index>(0, m.r_offset - q);
  const Index zone_hi = std::min<Index>(length - 1, m.r_offset + q);
  for (int pass = 0; pass < 2; ++pass) {
    const Signal tmpl = ensemble_template(m);
    for (Index b = 0; b < rows; ++b) {
      m.shifts[b] = best_shift(window, m, tmpl, b, zone_lo, zone_hi, params.max_shift);
    }
    fill_rows(window, m);
  }
  // Alignment only fixes shifts relative to each other; anchor the median
  // beat at its annotated R so the common offset does not drift.
  std::vector<Index> sorted(m.shifts.begin(), m.shifts.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
  const Index median = sorted[sorted.size() / 2];
  if (median != 0) {
    for (Index& s : m.shifts) s = std::clamp<Index>(s - median, -params.max_shift, params.max_shift);
    fill_rows(window, m);
  }
  return m;
}

Signal ensemble_template(const BeatMatrix& m) {
  Signal t = Signal::Zero(m.length());
  for (Index j = 0; j < m.length(); ++j) {
    double sum = 0.0;
    Index count = 0;
    for (Index b = 0; b < m.count(); ++b) {
      if (m.present(b, j)) {
        sum += m.beats(b, j);
        ++count;
      }
    }
    if (count > 0) t[j] = sum / static_cast<double>(count);
  }
  return t;
}

namespace {

FwaveSignal make_output(const SignalRef& window, const QrsAnnotations& qrs, Method method,
                        const ExtractParams& params) {
  FwaveSignal out;
  out.d = window;
  out.fs = qrs.fs;
  out.method = method;
  out.r_peaks = qrs.r_peaks;
  out.qrs_mask = qrs_interval_mask(window.size(), qrs.r_peaks, qrs.fs, params.qrs_half_width_s);
  return out;
}

/// Subtracts `recon` row by row at the aligned beat positions.
void subtract(FwaveSignal& out, const BeatMatrix& m, const Eigen::MatrixXd& recon) {
  for (Index b = 0; b < m.count(); ++b) {
    for (Index j = 0; j < m.length(); ++j) {
      if (m.present(b, j)) out.d[m.sample_index(b, j)] -= recon(b, j);
    }
  }
}

/// Least-squares gain of `tmpl` onto row b over columns [lo, hi).
double fit_scale(const BeatMatrix& m, const Signal& tmpl, Index b, Index lo, Index hi,
                 const ExtractParams& params) {
  double xt = 0.0, tt = 0.0;
  for (Index j = lo; j < hi; ++j) {
    if (!m.present(b, j)) continue;
    xt += m.beats(b, j) * tmpl[j];
    tt += tmpl[j] * tmpl[j];
  }
  if (tt == 0.0) return 1.0;
  return std::clamp(xt / tt, params.min_scale, params.max_scale);
}

}  // namespace

FwaveSignal extract_abs(const SignalRef& window, const QrsAnnotations& qrs,
                        const ExtractParams& params) {
  const BeatMatrix m = build_beat_matrix(window, qrs, params);
  const Signal tmpl = ensemble_template(m);
  FwaveSignal out = make_output(window, qrs, Method::Abs, params);
  subtract(out, m, tmpl.transpose().replicate(m.count(), 1));
  return out;
}

FwaveSignal extract_abs_sc1(const SignalRef& window, const QrsAnnotations& qrs,
                            const ExtractParams& params) {
  const BeatMatrix m = build_beat_matrix(window, qrs, params);
  const Signal tmpl = ensemble_template(m);
  FwaveSignal out = make_output(window, qrs, Method::AbsSc1, params);
  Eigen::MatrixXd recon(m.count(), m.length());
  for (Index b = 0; b < m.count(); ++b) {
    const double a = fit_scale(m, tmpl, b, 0, m.length(), params);
    out.scales.push_back(a);
    recon.row(b) = a * tmpl.transpose();
  }
  subtract(out, m, recon);
  return out;
}

FwaveSignal extract_abs_sc2(const SignalRef& window, const QrsAnnotations& qrs,
                            const ExtractParams& params) {
  const BeatMatrix m = build_beat_matrix(window, qrs, params);
  const Signal tmpl = ensemble_template(m);
  FwaveSignal out = make_output(window, qrs, Method::AbsSc2, params);

  const double fs = qrs.fs;
  const auto q = static_cast<Index>(std::lround(params.qrs_half_width_s * fs));
  const Index qrs_lo = std::max<Index>(0, m.r_offset - q);
  const Index t_lo = std::min<Index>(m.length(), m.r_offset + q + 1);
  const double fade = std::max(1.0, params.crossfade_s * fs);
  // Weight of the T-wave gain, ramping linearly across the QRS/T boundary.
  Signal t_weight(m.length());
  const double boundary = static_cast<double>(t_lo) - 0.5;
  for (Index j = 0; j < m.length(); ++j) {
    t_weight[j] = std::clamp((static_cast<double>(j) - boundary) / fade + 0.5, 0.0, 1.0);
  }

  Eigen::MatrixXd recon(m.count(), m.length());
  for (Index b = 0; b < m.count(); ++b) {
    const double a_qrs = fit_scale(m, tmpl, b, qrs_lo, t_lo, params);
    const double a_t = t_lo < m.length() ? fit_scale(m, tmpl, b, t_lo, m.length(), params) : a_qrs;
    for (Index j = 0; j < m.length(); ++j) {
      const double w = t_weight[j];
      recon(b, j) = ((1.0 - w) * a_qrs + w * a_t) * tmpl[j];
    }
  }
  subtract(out, m, recon);
  return out;
}

FwaveSignal extract_ts_pca(const SignalRef& window, const QrsAnnotations& qrs,
                           const ExtractParams& params) {
  auto fallback = [&] {
    FwaveSignal out = extract_abs(window, qrs, params);
    out.method = Method::TsPca;
    out.fell_back_to_abs = true;
    return out;
  };
  if (qrs.size() < 4) {
    if (qrs.size() < 2) fail(ErrorKind::TooFewBeats, "template subtraction needs at least 2 beats");
    return fallback();
  }

  const BeatMatrix m = build_beat_matrix(window, qrs, params);
  const Signal tmpl = ensemble_template(m);
  const Index rows = m.count();
  const Index cols = m.length();

  Eigen::MatrixXd centered = m.beats.rowwise() - tmpl.transpose();
  centered = m.present.select(centered, 0.0);
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(rows - 1);
  const double total = cov.trace();
  if (!(total > 1e-20 * tmpl.squaredNorm())) return fallback();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) return fallback();
  const Signal eigenvalues = solver.eigenvalues().cwiseMax(0.0).reverse();
  const Eigen::MatrixXd vectors = solver.eigenvectors().rowwise().reverse();
  const double energy = eigenvalues.sum();
  if (!(energy > 0.0)) return fallback();

  const Index cap = std::max<Index>(1, std::min(params.max_components, rows - 1));
  Index k = 1;
  double cumulative = eigenvalues[0];
  while (k < cap && cumulative < params.variance_threshold * energy) {
    cumulative += eigenvalues[k];
    ++k;
  }

  Eigen::MatrixXd basis = vectors.leftCols(k);
  for (Index c = 0; c < k; ++c) {
    Index arg = 0;
    basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, c) < 0.0) basis.col(c) *= -1.0;
  }

  Eigen::MatrixXd recon(rows, cols);
  for (Index b = 0; b < rows; ++b) {
    Signal coeffs;
    if (m.present.row(b).all()) {
      coeffs = basis.transpose() * centered.row(b).transpose();
    } else {
      const Eigen::MatrixXd masked =
          m.present.row(b).transpose().replicate(1, k).select(basis, 0.0);
      coeffs = masked.completeOrthogonalDecomposition().solve(centered.row(b).transpose());
    }
    recon.row(b) = tmpl.transpose() + (basis * coeffs).transpose();
  }

  FwaveSignal out = make_output(window, qrs, Method::TsPca, params);
  out.components = k;
  subtract(out, m, recon);
  return out;
}

FwaveSignal extract(Method method, const SignalRef& window, const QrsAnnotations& qrs,
                    const ExtractParams& params) {
  switch (method) {
    case Method::Abs: return extract_abs(window, qrs, params);
    case Method::AbsSc1: return extract_abs_sc1(window, qrs, params);
    case Method::AbsSc2: return extract_abs_sc2(window, qrs, params);
    case Method::TsPca: return extract_ts_pca(window, qrs, params);
  }
  return extract_abs(window, qrs, params);
}

}  // namespace fwbench
