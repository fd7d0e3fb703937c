#pragma once

#include "fwbench/types.hpp"

namespace fwbench {

/// Pan-Tompkins R-peak detector: 5-15 Hz band-pass, five-point derivative,
/// squaring, 150 ms moving-window integration, dual adaptive thresholds with
/// search-back and T-wave discrimination. Peaks are relocated to the largest
/// |x| within 50 ms and kept at least 200 ms apart.
///
/// `signal` is expected to be band-pass filtered already and at least 2 s long.
QrsAnnotations detect_qrs(const SignalRef& signal, double fs);

/// Energy-envelope detector used as the reference for bSQI: 10-25 Hz
/// band-pass, squaring, 120 ms smoothing, local maxima above a block-wise
/// percentile threshold, 250 ms refractory period.
QrsAnnotations detect_qrs_secondary(const SignalRef& signal, double fs);

/// Beat agreement between two detections of the same segment:
/// matched / (|a| + |b| - matched), with greedy nearest-first one-to-one
/// matching inside +-tol seconds. Two empty lists give 0.
double compute_bsqi(const QrsAnnotations& a, const QrsAnnotations& b, double tol = 0.15);

}  // namespace fwbench
