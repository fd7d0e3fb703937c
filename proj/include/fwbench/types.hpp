#pragma once

#include <Eigen/Dense>

#include <vector>

namespace fwbench {

using Index = Eigen::Index;

/// Sampled single-channel signal. Amplitudes are millivolts unless a
/// function states otherwise.
template <typename Scalar>
using SignalT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Signal = SignalT<double>;
using SignalRef = Eigen::Ref<const Signal>;

/// R-peak sample indices of one detector run. Strictly increasing.
struct QrsAnnotations {
  std::vector<Index> r_peaks;
  double fs = 0.0;

  std::size_t size() const { return r_peaks.size(); }
  bool empty() const { return r_peaks.empty(); }

  /// Peaks inside [begin, end), re-based so that `begin` maps to 0.
  QrsAnnotations slice(Index begin, Index end) const;
};

}  // namespace fwbench
