#pragma once

#include "fwbench/extract.hpp"
#include "fwbench/record.hpp"
#include "fwbench/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fwbench {

struct SimConfig {
  double fs = 200.0;
  double duration = 300.0;       ///< seconds, at least 60
  double af_burden = 0.5;        ///< fraction of time in AF
  double noise_rms = 0.0;        ///< microvolts
  double f0 = 6.0;               ///< f-wave fundamental, Hz in [4, 9]
  int n_harmonics = 3;
  double fwave_amplitude = 0.05; ///< fundamental amplitude, mV
  std::uint64_t seed = 0;
};

/// Gaussian bump a * exp(-(t - mu)^2 / (2 sigma^2)), times in seconds
/// relative to the R instant.
struct Wave {
  double amplitude = 0.0;
  double mu = 0.0;
  double sigma = 0.01;
};

/// One rendered cardiac cycle.
struct SimBeat {
  double r_time = 0.0;  ///< seconds
  bool af = false;
  std::vector<Wave> qrst;
  std::optional<Wave> p_wave;  ///< sinus beats only
};

struct SimRecord {
  Signal ecg;         ///< mV, noise included
  Signal true_fwave;  ///< mV, zero outside AF
  Signal noise;       ///< mV, the added noise channel alone
  std::vector<Index> true_r_peaks;
  Eigen::Array<bool, Eigen::Dynamic, 1> af_mask;
  std::vector<SimBeat> beats;
  SimConfig config;
};

/// Throws InvalidArgument for out-of-range configuration values.
void validate(const SimConfig& cfg);

SimRecord simulate_record(const SimConfig& cfg);

/// Adds the beat's waves to `out` (sampled at fs, sample 0 at t = 0).
void render_beat(const SimBeat& beat, double fs, Signal& out);

/// Sum of all rendered beats, i.e. the ventricular and sinus atrial part of
/// the ECG.
Signal render_beats(const SimRecord& rec);

/// n records; record i uses derive_seed(master_seed, i) and draws its own AF
/// burden (uniform), f0 and f-wave amplitude.
SimConfig dataset_config(std::size_t i, double noise_rms, std::uint64_t master_seed,
                         double duration = 300.0);
std::vector<SimRecord> generate_dataset(std::size_t n_records, double noise_rms,
                                        std::uint64_t master_seed, double duration = 300.0);

struct RmsError {
  double inside = 0.0;   ///< microvolts, AF samples within +-90 ms of a true R
  double outside = 0.0;  ///< microvolts, remaining AF samples
  Index n_inside = 0;
  Index n_outside = 0;
};

/// RMS of d - true_fwave over AF samples. All arguments describe the same
/// span of samples; peaks index into it.
RmsError rms_error(const SignalRef& d, const SignalRef& true_fwave,
                   const Eigen::Array<bool, Eigen::Dynamic, 1>& af_mask,
                   const std::vector<Index>& true_r_peaks, double fs, double half_width_s = 0.09);
RmsError rms_error(const FwaveSignal& extracted, const SimRecord& truth);

/// Single-lead ("V1") record with AF intervals from the mask and random
/// demographics.
EcgRecord to_ecg_record(const SimRecord& rec, const std::string& record_id);

/// truth.csv: true_fwave,af_mask,is_r_peak per sample.
void write_truth(const SimRecord& rec, const std::filesystem::path& dir);

struct SimTruth {
  Signal true_fwave;
  Eigen::Array<bool, Eigen::Dynamic, 1> af_mask;
  std::vector<Index> true_r_peaks;
};
SimTruth load_truth(const std::filesystem::path& dir);

}  // namespace fwbench
