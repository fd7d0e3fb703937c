#include "fwbench/sim.hpp"

#include "fwbench/error.hpp"
#include "fwbench/filter.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace fwbench {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMeanEpisodeSeconds = 120.0;
constexpr double kAfRrSigma = 0.2;
constexpr double kMinRr = 0.35;
constexpr double kMaxRr = 1.8;

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
double gauss(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

struct Episode {
  double start, end;
  bool af;
};

// Alternating AF/NSR episodes with geometric lengths, rescaled per rhythm so
// that AF covers af_burden of the record.
std::vector<Episode> draw_episodes(const SimConfig& cfg, Rng& rng) {
  if (cfg.af_burden <= 0.0) return {{0.0, cfg.duration, false}};
  if (cfg.af_burden >= 1.0) return {{0.0, cfg.duration, true}};
  std::geometric_distribution<int> geo(1.0 / kMeanEpisodeSeconds);
  bool af = std::bernoulli_distribution(cfg.af_burden)(rng);
  std::vector<Episode> eps;
  double t = 0.0;
  while (t < cfg.duration) {
    const double len = 1.0 + geo(rng);
    eps.push_back({t, t + len, af});
    t += len;
    af = !af;
  }
  if (eps.size() == 1) eps.push_back({t, t + kMeanEpisodeSeconds, !eps.front().af});

  double af_total = 0.0, nsr_total = 0.0;
  for (const auto& e : eps) (e.af ? af_total : nsr_total) += e.end - e.start;
  const double af_scale = cfg.af_burden * cfg.duration / af_total;
  const double nsr_scale = (1.0 - cfg.af_burden) * cfg.duration / nsr_total;
  t = 0.0;
  for (auto& e : eps) {
    const double len = (e.end - e.start) * (e.af ? af_scale : nsr_scale);
    e.start = t;
    e.end = t + len;
    t += len;
  }
  eps.back().end = cfg.duration;
  return eps;
}

bool af_at(const std::vector<Episode>& eps, double t) {
  for (const auto& e : eps) {
    if (t < e.end) return e.af;
  }
  return eps.back().af;
}

// Per-record ventricular template plus the per-beat modulation depths.
struct Morphology {
  Wave p, q, r, s, t;
  double resp_freq, resp_phase;
  double nsr_rr;
};

Morphology draw_morphology(Rng& rng) {
  Morphology m;
  m.p = {uniform(rng, 0.08, 0.2), -uniform(rng, 0.14, 0.18), uniform(rng, 0.018, 0.026)};
  m.q = {-uniform(rng, 0.05, 0.2), -uniform(rng, 0.022, 0.03), uniform(rng, 0.008, 0.012)};
  m.r = {uniform(rng, 0.8, 1.5), 0.0, uniform(rng, 0.008, 0.013)};
  m.s = {-uniform(rng, 0.1, 0.4), uniform(rng, 0.024, 0.032), uniform(rng, 0.008, 0.012)};
  m.t = {uniform(rng, 0.15, 0.45), uniform(rng, 0.2, 0.24), uniform(rng, 0.03, 0.045)};
  m.resp_freq = uniform(rng, 0.2, 0.33);
  m.resp_phase = uniform(rng, 0.0, kTwoPi);
  m.nsr_rr = uniform(rng, 0.75, 1.1);
  return m;
}

SimBeat make_beat(const Morphology& m, double r_time, double rr_prev, bool af, Rng& rng) {
  const double resp = std::sin(kTwoPi * m.resp_freq * r_time + m.resp_phase);
  const double resp2 = std::cos(kTwoPi * m.resp_freq * r_time + m.resp_phase);
  const double jitter = 0.001 * gauss(rng);

  SimBeat b;
  b.r_time = r_time;
  b.af = af;
  Wave q = m.q, r = m.r, s = m.s, t = m.t;
  q.amplitude *= 1.0 - 0.10 * resp + 0.03 * gauss(rng);
  r.amplitude *= 1.0 + 0.12 * resp + 0.03 * gauss(rng);
  s.amplitude *= 1.0 + 0.15 * resp2 + 0.03 * gauss(rng);
  r.sigma *= 1.0 + 0.04 * resp2;
  q.mu += jitter;
  r.mu += jitter;
  s.mu += jitter;
  t.amplitude *= 1.0 + 0.10 * resp2 + 0.08 * gauss(rng);
  t.mu += 0.04 * (rr_prev - 0.8) + 0.003 * gauss(rng);
  b.qrst = {q, r, s, t};
  if (!af) {
    Wave p = m.p;
    p.amplitude *= 1.0 + 0.05 * gauss(rng);
    b.p_wave = p;
  }
  return b;
}

Signal unit_rms(Signal x) {
  const double rms = std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
  if (rms > 0.0) x /= rms;
  return x;
}

Signal draw_noise(const SimConfig& cfg, Index n, Rng& rng) {
  const double fs = cfg.fs;
  Signal wander = Signal::Zero(n);
  for (int k = 0; k < 3; ++k) {
    const double f = uniform(rng, 0.05, 0.5);
    const double phase = uniform(rng, 0.0, kTwoPi);
    const double a = uniform(rng, 0.5, 1.0);
    for (Index i = 0; i < n; ++i) wander[i] += a * std::sin(kTwoPi * f * static_cast<double>(i) / fs + phase);
  }

  Signal white(n);
  for (Index i = 0; i < n; ++i) white[i] = gauss(rng);
  const Cascade<double> hp{butter_highpass(1.0, fs)};
  white = filtfilt(hp, white, 3 * significant_length(hp));

  Signal motion = Signal::Zero(n);
  std::exponential_distribution<double> gap(1.0 / 60.0);
  for (double t0 = gap(rng); t0 < cfg.duration; t0 += gap(rng)) {
    const double a = gauss(rng);
    const double tau = uniform(rng, 0.3, 1.5);
    for (Index i = 0; i < n; ++i) {
      const double dt = static_cast<double>(i) / fs - t0;
      if (dt < -0.5) continue;
      if (dt > 10.0 * tau) break;
      motion[i] += a / (1.0 + std::exp(-dt / 0.02)) * std::exp(-std::max(0.0, dt) / tau);
    }
  }

  const bool has_motion = motion.squaredNorm() > 0.0;
  Signal mix = std::sqrt(0.35) * unit_rms(wander) + std::sqrt(0.55) * unit_rms(white);
  if (has_motion) mix += std::sqrt(0.10) * unit_rms(motion);
  return unit_rms(mix) * (cfg.noise_rms / 1000.0);
}

Signal draw_fwave(const SimConfig& cfg, Index n, Rng& rng) {
  const double fs = cfg.fs;
  const double fm_rate = uniform(rng, 0.03, 0.08), fm_phase = uniform(rng, 0.0, kTwoPi);
  const double am_rate = uniform(rng, 0.02, 0.06), am_phase = uniform(rng, 0.0, kTwoPi);
  Signal f(n);
  double phase = uniform(rng, 0.0, kTwoPi);
  for (Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double amp = cfg.fwave_amplitude * (1.0 + 0.25 * std::sin(kTwoPi * am_rate * t + am_phase));
    double v = 0.0;
    for (int h = 1; h <= cfg.n_harmonics; ++h) v += amp / h * std::sin(h * phase);
    f[i] = v;
    const double freq = cfg.f0 * (1.0 + 0.02 * std::sin(kTwoPi * fm_rate * t + fm_phase));
    phase += kTwoPi * freq / fs;
  }
  return f;
}

}  // namespace

void validate(const SimConfig& cfg) {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::InvalidArgument, "invalid simulation config: " + what);
  };
  check(cfg.fs > 0.0 && std::isfinite(cfg.fs), "fs must be positive");
  check(cfg.duration >= 60.0 && std::isfinite(cfg.duration), "duration must be at least 60 s");
  check(cfg.af_burden >= 0.0 && cfg.af_burden <= 1.0, "af_burden must lie in [0, 1]");
  check(cfg.noise_rms >= 0.0 && std::isfinite(cfg.noise_rms), "noise_rms must be non-negative");
  check(cfg.f0 >= 4.0 && cfg.f0 <= 9.0, "f0 must lie in [4, 9] Hz");
  check(cfg.n_harmonics >= 1, "n_harmonics must be positive");
  check(cfg.fwave_amplitude >= 0.0 && std::isfinite(cfg.fwave_amplitude), "fwave_amplitude must be non-negative");
  check(cfg.n_harmonics * cfg.f0 * 1.1 < cfg.fs / 2.0, "f-wave harmonics exceed Nyquist");
}

void render_beat(const SimBeat& beat, double fs, Signal& out) {
  auto add = [&](const Wave& w) {
    const double centre = beat.r_time + w.mu;
    const auto lo = std::max<Index>(0, static_cast<Index>(std::floor((centre - 8.0 * w.sigma) * fs)));
    const auto hi = std::min<Index>(out.size() - 1, static_cast<Index>(std::ceil((centre + 8.0 * w.sigma) * fs)));
    for (Index i = lo; i <= hi; ++i) {
      const double z = (static_cast<double>(i) / fs - centre) / w.sigma;
      out[i] += w.amplitude * std::exp(-0.5 * z * z);
    }
  };
  if (beat.p_wave) add(*beat.p_wave);
  for (const auto& w : beat.qrst) add(w);
}

Signal render_beats(const SimRecord& rec) {
  Signal out = Signal::Zero(rec.ecg.size());
  for (const auto& b : rec.beats) render_beat(b, rec.config.fs, out);
  return out;
}

SimRecord simulate_record(const SimConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const auto n = static_cast<Index>(std::llround(cfg.duration * cfg.fs));

  SimRecord rec;
  rec.config = cfg;
  const auto episodes = draw_episodes(cfg, rng);
  const Morphology morph = draw_morphology(rng);

  double af_rr_mean = uniform(rng, 0.6, 1.0);
  bool prev_af = af_at(episodes, 0.0);
  double rr = morph.nsr_rr;
  for (double t = uniform(rng, 0.3, 0.8); t < cfg.duration; t += rr) {
    const bool af = af_at(episodes, t);
    if (af && !prev_af) af_rr_mean = uniform(rng, 0.6, 1.0);
    prev_af = af;
    rec.beats.push_back(make_beat(morph, t, rr, af, rng));
    if (af) {
      rr = af_rr_mean * std::exp(kAfRrSigma * gauss(rng) - 0.5 * kAfRrSigma * kAfRrSigma);
    } else {
      const double resp = std::sin(kTwoPi * morph.resp_freq * t + morph.resp_phase);
      rr = morph.nsr_rr * (1.0 + 0.05 * resp + 0.01 * gauss(rng));
    }
    rr = std::clamp(rr, kMinRr, kMaxRr);
  }

  // Each beat owns the samples from its boundary with the previous beat.
  rec.af_mask.setConstant(n, false);
  for (std::size_t k = 0; k < rec.beats.size(); ++k) {
    const auto boundary = [&](std::size_t j) -> Index {
      if (j == 0) return 0;
      if (j == rec.beats.size()) return n;
      const double r0 = rec.beats[j - 1].r_time, r1 = rec.beats[j].r_time;
      return std::clamp<Index>(static_cast<Index>(std::llround(std::max(r1 - 0.25, 0.5 * (r0 + r1)) * cfg.fs)), 0, n);
    };
    const Index lo = boundary(k), hi = boundary(k + 1);
    if (hi > lo) rec.af_mask.segment(lo, hi - lo).setConstant(rec.beats[k].af);
    const auto r_index = static_cast<Index>(std::llround(rec.beats[k].r_time * cfg.fs));
    if (r_index < n) rec.true_r_peaks.push_back(r_index);
  }

  rec.true_fwave = draw_fwave(cfg, n, rng);
  for (Index i = 0; i < n; ++i) {
    if (!rec.af_mask[i]) rec.true_fwave[i] = 0.0;
  }
  rec.noise = draw_noise(cfg, n, rng);
  rec.ecg = Signal::Zero(n);
  for (const auto& b : rec.beats) render_beat(b, cfg.fs, rec.ecg);
  rec.ecg += rec.true_fwave;
  rec.ecg += rec.noise;
  return rec;
}

SimConfig dataset_config(std::size_t i, double noise_rms, std::uint64_t master_seed, double duration) {
  SimConfig cfg;
  cfg.seed = derive_seed(master_seed, i);
  cfg.noise_rms = noise_rms;
  cfg.duration = duration;
  Rng rng(derive_seed(cfg.seed, 0x5eed));
  cfg.af_burden = uniform(rng, 0.0, 1.0);
  cfg.f0 = uniform(rng, 4.0, 9.0);
  cfg.fwave_amplitude = std::exp(uniform(rng, std::log(0.015), std::log(0.15)));
  return cfg;
}

std::vector<SimRecord> generate_dataset(std::size_t n_records, double noise_rms, std::uint64_t master_seed,
                                        double duration) {
  if (n_records < 1) fail(ErrorKind::InvalidArgument, "n_records must be at least 1");
  std::vector<SimRecord> out;
  out.reserve(n_records);
  for (std::size_t i = 0; i < n_records; ++i) {
    out.push_back(simulate_record(dataset_config(i, noise_rms, master_seed, duration)));
  }
  return out;
}

RmsError rms_error(const SignalRef& d, const SignalRef& true_fwave,
                   const Eigen::Array<bool, Eigen::Dynamic, 1>& af_mask,
                   const std::vector<Index>& true_r_peaks, double fs, double half_width_s) {
  const Index n = d.size();
  if (true_fwave.size() != n || af_mask.size() != n) {
    fail(ErrorKind::LengthMismatch, "extracted and true f-waves differ in length");
  }
  const auto qrs = qrs_interval_mask(n, true_r_peaks, fs, half_width_s);
  double sum_in = 0.0, sum_out = 0.0;
  RmsError e;
  for (Index i = 0; i < n; ++i) {
    if (!af_mask[i]) continue;
    const double err = d[i] - true_fwave[i];
    if (qrs[i]) {
      sum_in += err * err;
      ++e.n_inside;
    } else {
      sum_out += err * err;
      ++e.n_outside;
    }
  }
  if (e.n_inside + e.n_outside == 0) fail(ErrorKind::InsufficientData, "no AF samples to compare");
  if (e.n_inside) e.inside = 1000.0 * std::sqrt(sum_in / static_cast<double>(e.n_inside));
  if (e.n_outside) e.outside = 1000.0 * std::sqrt(sum_out / static_cast<double>(e.n_outside));
  return e;
}

RmsError rms_error(const FwaveSignal& extracted, const SimRecord& truth) {
  return rms_error(extracted.d, truth.true_fwave, truth.af_mask, truth.true_r_peaks, truth.config.fs);
}

EcgRecord to_ecg_record(const SimRecord& rec, const std::string& record_id) {
  EcgRecord out;
  out.record_id = record_id;
  out.sampling_rate = static_cast<int>(std::lround(rec.config.fs));
  out.leads.push_back({"V1", rec.ecg});
  const Index n = rec.af_mask.size();
  for (Index i = 0; i < n;) {
    Index j = i;
    while (j < n && rec.af_mask[j] == rec.af_mask[i]) ++j;
    if (rec.af_mask[i]) out.rhythm_intervals.push_back({i, j, Rhythm::AF});
    i = j;
  }
  Rng rng(derive_seed(rec.config.seed, 0xa9e));
  out.age = std::uniform_int_distribution<int>(35, 90)(rng);
  out.sex = std::bernoulli_distribution(0.5)(rng) ? Sex::F : Sex::M;
  return out;
}

void write_truth(const SimRecord& rec, const std::filesystem::path& dir) {
  std::vector<bool> is_peak(static_cast<std::size_t>(rec.ecg.size()), false);
  for (Index p : rec.true_r_peaks) is_peak[static_cast<std::size_t>(p)] = true;
  std::string out = "true_fwave,af_mask,is_r_peak\n";
  char buf[32];
  for (Index i = 0; i < rec.true_fwave.size(); ++i) {
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), rec.true_fwave[i]);
    out.append(buf, ptr);
    out += rec.af_mask[i] ? ",1," : ",0,";
    out += is_peak[static_cast<std::size_t>(i)] ? "1\n" : "0\n";
  }
  std::ofstream file(dir / "truth.csv", std::ios::binary | std::ios::trunc);
  if (!file) fail(ErrorKind::Io, "cannot write " + (dir / "truth.csv").string());
  file << out;
}

SimTruth load_truth(const std::filesystem::path& dir) {
  const auto path = dir / "truth.csv";
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("true_fwave,af_mask,is_r_peak", 0) != 0) fail(ErrorKind::MalformedInput, path.string() + ": unexpected header");
  std::vector<double> fw;
  std::vector<bool> mask;
  SimTruth t;
  for (Index i = 0; std::getline(in, line); ++i) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) fail(ErrorKind::MalformedInput, path.string() + ": bad row");
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(line.data(), line.data() + c1, v);
    if (ec != std::errc()) fail(ErrorKind::MalformedInput, path.string() + ": bad number");
    fw.push_back(v);
    mask.push_back(line[c1 + 1] == '1');
    if (line[c2 + 1] == '1') t.true_r_peaks.push_back(i);
  }
  t.true_fwave = Eigen::Map<const Signal>(fw.data(), static_cast<Index>(fw.size()));
  t.af_mask.resize(static_cast<Index>(mask.size()));
  for (std::size_t i = 0; i < mask.size(); ++i) t.af_mask[static_cast<Index>(i)] = mask[i];
  return t;
}

}  // namespace fwbench
