#pragma once

#include "fwbench/types.hpp"

#include <array>
#include <optional>
#include <string_view>
#include <vector>

namespace fwbench {

enum class Method { Abs, AbsSc1, AbsSc2, TsPca };

inline constexpr std::array<Method, 4> kAllMethods{Method::Abs, Method::AbsSc1, Method::AbsSc2,
                                                   Method::TsPca};

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

/// Tunables shared by the four template-subtraction methods.
struct ExtractParams {
  double beat_pre_s = 0.25;   ///< nominal span before R
  double beat_post_s = 0.45;  ///< nominal span after R
  Index max_shift = 10;       ///< alignment search range, samples
  double qrs_half_width_s = 0.09;
  double crossfade_s = 0.02;
  double min_scale = 0.0;
  double max_scale = 3.0;
  double variance_threshold = 0.90;
  Index max_components = 3;
};

/// Time-aligned cardiac cycles excised around each R-peak of one window.
///
/// Row b holds beat b; column j maps to window sample
/// r_peaks[b] + shifts[b] - r_offset + j. Samples outside the beat's
/// boundaries (window edges, split points towards neighbouring beats) are
/// marked absent and stored as zero.
struct BeatMatrix {
  Eigen::MatrixXd beats;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> present;
  std::vector<Index> r_peaks;
  std::vector<Index> shifts;
  std::vector<Index> lo;  ///< first window sample owned by each beat
  std::vector<Index> hi;  ///< one past the last owned sample
  Index r_offset = 0;

  Index count() const { return beats.rows(); }
  Index length() const { return beats.cols(); }
  Index sample_index(Index b, Index j) const { return r_peaks[b] + shifts[b] - r_offset + j; }
};

/// Extracted atrial signal of one window.
struct FwaveSignal {
  Signal d;
  Eigen::Array<bool, Eigen::Dynamic, 1> qrs_mask;  ///< true within +-90 ms of a detected R
  std::vector<Index> r_peaks;
  double fs = 0.0;
  Method method = Method::Abs;
  bool fell_back_to_abs = false;  ///< TS_PCA only: too few beats or degenerate ensemble
  std::vector<double> scales;     ///< per-beat whole-template scale (ABS_sc1)
  Index components = 0;           ///< TS_PCA: principal components kept
};

BeatMatrix build_beat_matrix(const SignalRef& window, const QrsAnnotations& qrs,
                             const ExtractParams& params = {});

/// Per-sample mean over the beats present at that sample (zero where none is).
Signal ensemble_template(const BeatMatrix& beats);

FwaveSignal extract_abs(const SignalRef& window, const QrsAnnotations& qrs,
                        const ExtractParams& params = {});
FwaveSignal extract_abs_sc1(const SignalRef& window, const QrsAnnotations& qrs,
                            const ExtractParams& params = {});
FwaveSignal extract_abs_sc2(const SignalRef& window, const QrsAnnotations& qrs,
                            const ExtractParams& params = {});
FwaveSignal extract_ts_pca(const SignalRef& window, const QrsAnnotations& qrs,
                           const ExtractParams& params = {});

FwaveSignal extract(Method method, const SignalRef& window, const QrsAnnotations& qrs,
                    const ExtractParams& params = {});

/// true inside [R - half_width, R + half_width] for every peak.
Eigen::Array<bool, Eigen::Dynamic, 1> qrs_interval_mask(Index n, const std::vector<Index>& r_peaks,
                                                        double fs, double half_width_s = 0.09);

}  // namespace fwbench
