#include "fwbench/bench.hpp"

#include "fwbench/parallel.hpp"
#include "fwbench/qrs.hpp"
#include "fwbench/spectral.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace fwbench {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Seeds of the classifier stage, derived from the master seed so that all
// methods see the same split, folds and bootstrap resamples.
enum SeedSlot : std::uint64_t { kSplitSeed = 1, kGridSeed = 2, kForestSeed = 3, kBootstrapSeed = 4 };

constexpr std::array<int, 4> kAllowedEstimators{100, 200, 300, 1000};
constexpr std::array<int, 2> kAllowedFeatures{2, 6};
constexpr std::array<double, 5> kAllowedSamples{0.1, 0.3, 0.5, 0.7, 0.9};

std::string number(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

void make_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorKind::Io, "cannot create output directory " + dir.string());
}

[[noreturn]] void rethrow_at(const Error& e, const std::string& locus) {
  throw Error(e.kind(), locus + ": " + e.what());
}

template <typename T>
std::vector<T> get_list(const json& j, const char* key) {
  if (!j.is_array()) fail(ErrorKind::InvalidArgument, std::string("config: '") + key + "' must be a list");
  return j.get<std::vector<T>>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      fail(ErrorKind::InvalidArgument, "config: unknown key '" + key + "' in " + where);
    }
  }
}

json hyperparams_json(const RfHyperparams& hp) {
  return {{"n_estimators", hp.n_estimators},
          {"max_depth", hp.max_depth},
          {"max_features", hp.max_features},
          {"effective_max_features", std::min(hp.max_features, static_cast<int>(kFeatureNames.size()))},
          {"max_samples", hp.max_samples}};
}

}  // namespace

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
      return kExitUsage;
    case ErrorKind::MissingFile:
    case ErrorKind::MalformedInput:
    case ErrorKind::OutOfRange:
    case ErrorKind::LengthMismatch:
    case ErrorKind::UnknownLead:
      return kExitInput;
    case ErrorKind::SignalTooShort:
    case ErrorKind::TooFewBeats:
    case ErrorKind::SingleClass:
    case ErrorKind::InsufficientData:
    case ErrorKind::ColumnMismatch:
      return kExitPipeline;
    case ErrorKind::Io:
      return kExitOutput;
  }
  return 1;
}

void validate(const BenchConfig& cfg) {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::InvalidArgument, "config: " + what);
  };
  check(cfg.dataset.has_value() != cfg.simulate.has_value(), "give exactly one of 'dataset' and 'simulate'");
  if (cfg.dataset && !fs::is_directory(*cfg.dataset)) {
    fail(ErrorKind::MissingFile, "dataset directory not found: " + cfg.dataset->string());
  }
  if (cfg.simulate) {
    check(cfg.simulate->n_records >= 1, "simulate.n_records must be at least 1");
    check(cfg.simulate->noise_rms >= 0.0 && std::isfinite(cfg.simulate->noise_rms),
          "simulate.noise_rms must be non-negative");
    check(cfg.simulate->duration >= 60.0, "simulate.duration must be at least 60 s");
  }
  check(!cfg.methods.empty(), "at least one method is required");
  std::set<Method> unique(cfg.methods.begin(), cfg.methods.end());
  check(unique.size() == cfg.methods.size(), "methods must not repeat");
  check(cfg.filter.low_cutoff > 0.0 && cfg.filter.low_cutoff < cfg.filter.high_cutoff,
        "filter cutoffs must satisfy 0 < low < high");
  check(cfg.welch_segment >= 16, "welch_segment must be at least 16");
  check(cfg.cv_folds >= 2, "cv_folds must be at least 2");
  check(cfg.train_ratio > 0.0 && cfg.train_ratio < 1.0, "train_ratio must lie in (0, 1)");
  check(cfg.bootstrap_rounds >= 1, "bootstrap_rounds must be positive");
  check(cfg.grid.size() > 0, "grid must not be empty");
  for (int v : cfg.grid.n_estimators) {
    check(std::find(kAllowedEstimators.begin(), kAllowedEstimators.end(), v) != kAllowedEstimators.end(),
          "grid.n_estimators values must come from {100, 200, 300, 1000}");
  }
  for (int v : cfg.grid.max_depth) check(v >= 1 && v <= 6, "grid.max_depth values must lie in 1..6");
  for (int v : cfg.grid.max_features) {
    check(std::find(kAllowedFeatures.begin(), kAllowedFeatures.end(), v) != kAllowedFeatures.end(),
          "grid.max_features values must come from {2, 6}");
  }
  for (double v : cfg.grid.max_samples) {
    check(std::any_of(kAllowedSamples.begin(), kAllowedSamples.end(), [&](double a) { return std::abs(a - v) < 1e-12; }),
          "grid.max_samples values must come from {0.1, 0.3, 0.5, 0.7, 0.9}");
  }
  check(cfg.extract.max_shift >= 0 && cfg.extract.beat_pre_s > 0.0 && cfg.extract.beat_post_s > 0.0,
        "extract spans must be positive");
}

BenchConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidArgument, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::InvalidArgument, "config must be a JSON object");
  reject_unknown(j,
                 {"dataset", "simulate", "leads", "methods", "filter", "welch_segment", "extract", "grid",
                  "cv_folds", "train_ratio", "bootstrap_rounds", "seed", "threads", "output"},
                 "config");
  BenchConfig cfg;
  try {
    if (j.contains("dataset")) cfg.dataset = fs::path(j["dataset"].get<std::string>());
    if (j.contains("simulate")) {
      const json& s = j["simulate"];
      reject_unknown(s, {"n_records", "noise_rms", "duration", "seed"}, "simulate");
      SimulationSpec spec;
      spec.n_records = s.value("n_records", spec.n_records);
      spec.noise_rms = s.value("noise_rms", spec.noise_rms);
      spec.duration = s.value("duration", spec.duration);
      spec.seed = s.value("seed", spec.seed);
      cfg.simulate = spec;
    }
    if (j.contains("leads")) cfg.leads = get_list<std::string>(j["leads"], "leads");
    if (j.contains("methods")) {
      cfg.methods.clear();
      for (const auto& name : get_list<std::string>(j["methods"], "methods")) {
        try {
          cfg.methods.push_back(parse_method(name));
        } catch (const Error&) {
          fail(ErrorKind::InvalidArgument, "config: unknown method '" + name + "'");
        }
      }
    }
    if (j.contains("filter")) {
      const json& f = j["filter"];
      reject_unknown(f, {"low_cutoff", "high_cutoff", "notch"}, "filter");
      cfg.filter.low_cutoff = f.value("low_cutoff", cfg.filter.low_cutoff);
      cfg.filter.high_cutoff = f.value("high_cutoff", cfg.filter.high_cutoff);
      if (f.contains("notch") && !f["notch"].is_null()) cfg.filter.notch_freq = f["notch"].get<double>();
    }
    cfg.welch_segment = j.value("welch_segment", cfg.welch_segment);
    if (j.contains("extract")) {
      const json& e = j["extract"];
      reject_unknown(e,
                     {"beat_pre_s", "beat_post_s", "max_shift", "qrs_half_width_s", "crossfade_s", "min_scale",
                      "max_scale", "variance_threshold", "max_components"},
                     "extract");
      auto& p = cfg.extract;
      p.beat_pre_s = e.value("beat_pre_s", p.beat_pre_s);
      p.beat_post_s = e.value("beat_post_s", p.beat_post_s);
      p.max_shift = e.value("max_shift", p.max_shift);
      p.qrs_half_width_s = e.value("qrs_half_width_s", p.qrs_half_width_s);
      p.crossfade_s = e.value("crossfade_s", p.crossfade_s);
      p.min_scale = e.value("min_scale", p.min_scale);
      p.max_scale = e.value("max_scale", p.max_scale);
      p.variance_threshold = e.value("variance_threshold", p.variance_threshold);
      p.max_components = e.value("max_components", p.max_components);
    }
    if (j.contains("grid")) {
      const json& g = j["grid"];
      reject_unknown(g, {"n_estimators", "max_depth", "max_features", "max_samples"}, "grid");
      if (g.contains("n_estimators")) cfg.grid.n_estimators = get_list<int>(g["n_estimators"], "grid.n_estimators");
      if (g.contains("max_depth")) cfg.grid.max_depth = get_list<int>(g["max_depth"], "grid.max_depth");
      if (g.contains("max_features")) cfg.grid.max_features = get_list<int>(g["max_features"], "grid.max_features");
      if (g.contains("max_samples")) cfg.grid.max_samples = get_list<double>(g["max_samples"], "grid.max_samples");
    }
    cfg.cv_folds = j.value("cv_folds", cfg.cv_folds);
    cfg.train_ratio = j.value("train_ratio", cfg.train_ratio);
    cfg.bootstrap_rounds = j.value("bootstrap_rounds", cfg.bootstrap_rounds);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.threads = j.value("threads", cfg.threads);
    if (j.contains("output")) cfg.output = fs::path(j["output"].get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidArgument, std::string("config: ") + e.what());
  }
  return cfg;
}

BenchConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

json config_to_json(const BenchConfig& cfg) {
  json j;
  if (cfg.dataset) j["dataset"] = cfg.dataset->string();
  if (cfg.simulate) {
    j["simulate"] = {{"n_records", cfg.simulate->n_records},
                     {"noise_rms", cfg.simulate->noise_rms},
                     {"duration", cfg.simulate->duration},
                     {"seed", cfg.simulate->seed}};
  }
  j["leads"] = cfg.leads;
  json methods = json::array();
  for (Method m : cfg.methods) methods.push_back(std::string(to_string(m)));
  j["methods"] = methods;
  j["filter"] = {{"low_cutoff", cfg.filter.low_cutoff},
                 {"high_cutoff", cfg.filter.high_cutoff},
                 {"notch", cfg.filter.notch_freq ? json(*cfg.filter.notch_freq) : json(nullptr)}};
  j["welch_segment"] = cfg.welch_segment;
  const auto& p = cfg.extract;
  j["extract"] = {{"beat_pre_s", p.beat_pre_s},
                  {"beat_post_s", p.beat_post_s},
                  {"max_shift", p.max_shift},
                  {"qrs_half_width_s", p.qrs_half_width_s},
                  {"crossfade_s", p.crossfade_s},
                  {"min_scale", p.min_scale},
                  {"max_scale", p.max_scale},
                  {"variance_threshold", p.variance_threshold},
                  {"max_components", p.max_components}};
  j["grid"] = {{"n_estimators", cfg.grid.n_estimators},
               {"max_depth", cfg.grid.max_depth},
               {"max_features", cfg.grid.max_features},
               {"max_samples", cfg.grid.max_samples}};
  j["cv_folds"] = cfg.cv_folds;
  j["train_ratio"] = cfg.train_ratio;
  j["bootstrap_rounds"] = cfg.bootstrap_rounds;
  j["seed"] = cfg.seed;
  return j;
}

json seeds_json(const BenchConfig& cfg) {
  return {{"master", cfg.seed},
          {"split", derive_seed(cfg.seed, kSplitSeed)},
          {"grid_search", derive_seed(cfg.seed, kGridSeed)},
          {"forest", derive_seed(cfg.seed, kForestSeed)},
          {"bootstrap", derive_seed(cfg.seed, kBootstrapSeed)}};
}

std::string record_id_for(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "sim%04zu", i);
  return buf;
}

}  // namespace

std::string config_json(const BenchConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

LoadedData load_dataset(const BenchConfig& cfg) {
  LoadedData data;
  if (cfg.simulate) {
    const auto& s = *cfg.simulate;
    data.records.resize(s.n_records);
    data.truth.resize(s.n_records);
    parallel_for(s.n_records, cfg.threads, [&](std::size_t i) {
      const SimRecord rec = simulate_record(dataset_config(i, s.noise_rms, s.seed, s.duration));
      data.records[i] = to_ecg_record(rec, record_id_for(i));
      data.truth[i] = SimTruth{rec.true_fwave, rec.af_mask, rec.true_r_peaks};
    });
    return data;
  }
  if (!cfg.dataset || !fs::is_directory(*cfg.dataset)) {
    fail(ErrorKind::MissingFile, "dataset directory not found");
  }
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(*cfg.dataset)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) fail(ErrorKind::MissingFile, "no record directories in " + cfg.dataset->string());
  data.records.resize(dirs.size());
  data.truth.resize(dirs.size());
  parallel_for(dirs.size(), cfg.threads, [&](std::size_t i) {
    try {
      data.records[i] = load_record(dirs[i]);
      if (fs::exists(dirs[i] / "truth.csv")) data.truth[i] = load_truth(dirs[i]);
    } catch (const Error& e) {
      rethrow_at(e, dirs[i].string());
    }
  });
  return data;
}

namespace {

struct WindowRms {
  Method method;
  std::string lead;
  RmsError error;
};

}  // namespace

ScreenedLead screen_lead(const EcgRecord& rec, const std::string& lead_name, const FilterSpec& filter) {
  const auto fs = static_cast<double>(rec.sampling_rate);
  ScreenedLead out;
  out.x = preprocess(rec.lead(lead_name).samples, fs, filter);
  out.qrs = detect_qrs(out.x, fs);
  const QrsAnnotations ref = detect_qrs_secondary(out.x, fs);
  for (Window w : segment_windows(rec, lead_name)) {
    const QrsAnnotations q = out.qrs.slice(w.start, w.end());
    out.windows.push_back(apply_exclusions(w, q, compute_bsqi(q, ref.slice(w.start, w.end()))));
  }
  return out;
}

namespace {

struct RecordOutput {
  std::vector<Window> windows;
  FeatureTable rows;
  std::vector<WindowRms> rms;
};

RecordOutput process_record(const BenchConfig& cfg, const EcgRecord& rec, const std::optional<SimTruth>& truth,
                            const std::vector<std::string>& leads) {
  RecordOutput out;
  const auto fs = static_cast<double>(rec.sampling_rate);
  if (truth && truth->true_fwave.size() != rec.length()) {
    fail(ErrorKind::LengthMismatch, rec.record_id + ": truth.csv length differs from the signal");
  }
  for (const auto& lead_name : leads) {
    const std::string locus = rec.record_id + "/" + lead_name;
    ScreenedLead screened;
    try {
      screened = screen_lead(rec, lead_name, cfg.filter);
    } catch (const Error& e) {
      rethrow_at(e, locus);
    }
    const Signal& x = screened.x;
    QrsAnnotations true_peaks;
    if (truth) true_peaks = QrsAnnotations{truth->true_r_peaks, fs};

    for (Window w : screened.windows) {
      const QrsAnnotations q = screened.qrs.slice(w.start, w.end());
      if (w.included()) {
        const auto segment = x.segment(w.start, w.length);
        for (Method m : cfg.methods) {
          try {
            const FwaveSignal d = extract(m, segment, q, cfg.extract);
            FeatureRow row;
            row.record_id = rec.record_id;
            row.lead = lead_name;
            row.window_idx = w.index;
            row.method = m;
            row.label = w.label;
            row.features = featurize_window(d, cfg.welch_segment);
            out.rows.push_back(std::move(row));
            if (truth && w.label == WindowLabel::AF) {
              const RmsError err = rms_error(d.d, truth->true_fwave.segment(w.start, w.length),
                                             truth->af_mask.segment(w.start, w.length),
                                             true_peaks.slice(w.start, w.end()).r_peaks, fs,
                                             cfg.extract.qrs_half_width_s);
              out.rms.push_back({m, lead_name, err});
            }
          } catch (const Error& e) {
            rethrow_at(e, locus + " window " + std::to_string(w.index) + " " + std::string(to_string(m)));
          }
        }
      }
      out.windows.push_back(std::move(w));
    }
  }
  return out;
}

std::vector<std::string> resolve_leads(const BenchConfig& cfg, const LoadedData& data) {
  if (data.records.empty()) fail(ErrorKind::InsufficientData, "dataset holds no records");
  std::vector<std::string> leads = cfg.leads.empty() ? data.records.front().lead_names() : cfg.leads;
  for (const auto& rec : data.records) {
    for (const auto& l : leads) {
      try {
        (void)rec.lead(l);
      } catch (const Error& e) {
        rethrow_at(e, rec.record_id);
      }
    }
  }
  return leads;
}

}  // namespace

BenchResult run_pipeline(const BenchConfig& cfg, const LoadedData& data) {
  validate(cfg);
  const std::vector<std::string> leads = resolve_leads(cfg, data);

  std::vector<RecordOutput> per_record(data.records.size());
  parallel_for(data.records.size(), cfg.threads, [&](std::size_t i) {
    per_record[i] = process_record(cfg, data.records[i], data.truth[i], leads);
  });

  BenchResult result;
  std::vector<WindowRms> rms;
  for (auto& r : per_record) {
    std::move(r.windows.begin(), r.windows.end(), std::back_inserter(result.windows));
    std::move(r.rows.begin(), r.rows.end(), std::back_inserter(result.features));
    std::move(r.rms.begin(), r.rms.end(), std::back_inserter(rms));
  }

  for (const auto& lead : leads) {
    CensusRow row;
    row.lead = lead;
    for (auto reason : {ExclusionReason::MixedRhythm, ExclusionReason::Afl, ExclusionReason::TooFewQrs,
                        ExclusionReason::LowBsqi}) {
      row.excluded[reason] = 0;
    }
    for (const auto& w : result.windows) {
      if (w.lead_name != lead) continue;
      ++row.total;
      if (w.included()) {
        ++row.included;
      } else {
        ++row.excluded[*w.exclusion];
      }
    }
    result.census.push_back(std::move(row));
  }

  std::vector<MethodScore> scores;
  for (const auto& lead : leads) {
    for (Method m : cfg.methods) {
      const std::string locus = lead + " " + std::string(to_string(m));
      FeatureTable rows;
      for (const auto& r : result.features) {
        if (r.lead == lead && r.method == m) rows.push_back(r);
      }
      MethodResult mr;
      mr.method = m;
      mr.lead = lead;
      try {
        const Dataset all = to_dataset(rows);
        const TrainTestSplit split = split_train_test(all, cfg.train_ratio, derive_seed(cfg.seed, kSplitSeed));
        mr.n_train = split.train.size();
        mr.n_test = split.test.size();
        mr.train_records = split.train_records.size();
        mr.test_records = split.test_records.size();
        mr.search = grid_search_cv(split.train, cfg.grid, cfg.cv_folds, derive_seed(cfg.seed, kGridSeed), cfg.threads);
        std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
        mr.model = train_forest(split.train.x, split.train.y, mr.search.best, derive_seed(cfg.seed, kForestSeed), names);
        mr.auroc = bootstrap_auroc(mr.model, split.test, cfg.bootstrap_rounds, derive_seed(cfg.seed, kBootstrapSeed));
      } catch (const Error& e) {
        rethrow_at(e, locus);
      }
      scores.push_back({m, lead, mr.auroc});
      result.methods.push_back(std::move(mr));
    }
  }
  result.ranking = rank_methods(scores);

  bool have_truth = std::any_of(data.truth.begin(), data.truth.end(), [](const auto& t) { return t.has_value(); });
  if (have_truth) {
    for (const auto& lead : leads) {
      for (Method m : cfg.methods) {
        RmsRow row;
        row.method = m;
        row.lead = lead;
        double sum_in = 0.0, sum_out = 0.0;
        Index n_in = 0, n_out = 0;
        for (const auto& r : rms) {
          if (r.method != m || r.lead != lead) continue;
          ++row.windows;
          if (r.error.n_inside) {
            sum_in += r.error.inside;
            ++n_in;
          }
          if (r.error.n_outside) {
            sum_out += r.error.outside;
            ++n_out;
          }
        }
        row.inside = n_in ? sum_in / static_cast<double>(n_in) : 0.0;
        row.outside = n_out ? sum_out / static_cast<double>(n_out) : 0.0;
        result.rms.push_back(row);
      }
    }
  }
  return result;
}

BenchResult run_pipeline(const BenchConfig& cfg) {
  validate(cfg);
  return run_pipeline(cfg, load_dataset(cfg));
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void write_outputs(const BenchConfig& cfg, const BenchResult& result) {
  const fs::path& dir = cfg.output;
  make_output_dir(dir);
  make_output_dir(dir / "models");
  std::vector<std::string> files;

  write_feature_table(result.features, dir / "features.csv");
  files.push_back("features.csv");

  {
    std::string s = "record_id,lead,window_idx,start,label,status\n";
    for (const auto& w : result.windows) {
      s += w.record_id + "," + w.lead_name + "," + std::to_string(w.index) + "," + std::to_string(w.start) + "," +
           std::string(to_string(w.label)) + "," +
           (w.included() ? std::string("included") : std::string(to_string(*w.exclusion))) + "\n";
    }
    write_text(dir / "windows.csv", s);
    files.push_back("windows.csv");
  }
  {
    std::string s = "lead,total,included,mixed_rhythm,afl,too_few_qrs,low_bsqi\n";
    for (const auto& c : result.census) {
      s += c.lead + "," + std::to_string(c.total) + "," + std::to_string(c.included);
      for (auto reason : {ExclusionReason::MixedRhythm, ExclusionReason::Afl, ExclusionReason::TooFewQrs,
                          ExclusionReason::LowBsqi}) {
        s += "," + std::to_string(c.excluded.at(reason));
      }
      s += "\n";
    }
    write_text(dir / "census.csv", s);
    files.push_back("census.csv");
  }
  {
    std::string s = "lead,method,rank,auroc_median,auroc_ci_low,auroc_ci_high,best\n";
    for (const auto& lr : result.ranking.per_lead) {
      for (std::size_t i = 0; i < lr.order.size(); ++i) {
        const MethodScore* ms = result.ranking.find(lr.order[i], lr.lead);
        s += lr.lead + "," + std::string(to_string(lr.order[i])) + "," + std::to_string(lr.rank[i]) + "," +
             number(ms->auroc.median) + "," + number(ms->auroc.ci_low) + "," + number(ms->auroc.ci_high) + "," +
             (lr.rank[i] == 1 ? "1" : "0") + "\n";
      }
    }
    write_text(dir / "ranking.csv", s);
    files.push_back("ranking.csv");
  }
  if (!result.rms.empty()) {
    std::string s = "lead,method,inside_qrs_uv,outside_qrs_uv,af_windows\n";
    for (const auto& r : result.rms) {
      s += r.lead + "," + std::string(to_string(r.method)) + "," + number(r.inside) + "," + number(r.outside) + "," +
           std::to_string(r.windows) + "\n";
    }
    write_text(dir / "rms_error.csv", s);
    files.push_back("rms_error.csv");
  }
  for (const auto& mr : result.methods) {
    const std::string name = "models/" + mr.lead + "_" + std::string(to_string(mr.method)) + ".json";
    save_forest(mr.model, dir / name);
    files.push_back(name);
  }

  json report;
  report["version"] = kVersion;
  report["config"] = config_to_json(cfg);
  report["seeds"] = seeds_json(cfg);
  report["notes"] = json::array({"max_features values above the number of features (5) are clamped to 5"});
  json census = json::array();
  for (const auto& c : result.census) {
    json ex;
    for (const auto& [reason, count] : c.excluded) ex[std::string(to_string(reason))] = count;
    census.push_back({{"lead", c.lead}, {"total", c.total}, {"included", c.included}, {"excluded", ex}});
  }
  report["census"] = census;
  json results = json::array();
  for (const auto& mr : result.methods) {
    results.push_back({{"lead", mr.lead},
                       {"method", std::string(to_string(mr.method))},
                       {"train_windows", mr.n_train},
                       {"test_windows", mr.n_test},
                       {"train_records", mr.train_records},
                       {"test_records", mr.test_records},
                       {"best_hyperparams", hyperparams_json(mr.search.best)},
                       {"cv_auroc", mr.search.best_score},
                       {"auroc",
                        {{"median", mr.auroc.median},
                         {"ci_low", mr.auroc.ci_low},
                         {"ci_high", mr.auroc.ci_high},
                         {"rounds", mr.auroc.rounds}}}});
  }
  report["results"] = results;
  json per_lead = json::array();
  for (const auto& lr : result.ranking.per_lead) {
    json order = json::array();
    for (Method m : lr.order) order.push_back(std::string(to_string(m)));
    json best = json::array();
    for (std::size_t i = 0; i < lr.order.size(); ++i) {
      if (lr.rank[i] == 1) best.push_back(std::string(to_string(lr.order[i])));
    }
    per_lead.push_back({{"lead", lr.lead}, {"order", order}, {"rank", lr.rank}, {"best", best},
                        {"tie_at_top", lr.tie_at_top}});
  }
  json overall = json::array();
  for (Method m : result.ranking.overall) overall.push_back(std::string(to_string(m)));
  report["ranking"] = {{"per_lead", per_lead},
                       {"overall", overall},
                       {"mean_rank", result.ranking.mean_rank},
                       {"best_in_every_lead", result.ranking.overall_best_in_every_lead}};
  if (!result.rms.empty()) {
    json rms = json::array();
    for (const auto& r : result.rms) {
      rms.push_back({{"lead", r.lead},
                     {"method", std::string(to_string(r.method))},
                     {"inside_qrs_uv", r.inside},
                     {"outside_qrs_uv", r.outside},
                     {"af_windows", r.windows}});
    }
    report["rms_error"] = rms;
  }
  write_text(dir / "report.json", report.dump(2) + "\n");
  files.push_back("report.json");

  json manifest;
  manifest["tool"] = "fwbench run";
  manifest["version"] = kVersion;
  manifest["config"] = config_to_json(cfg);
  manifest["seeds"] = seeds_json(cfg);
  json digests;
  for (const auto& f : files) digests[f] = file_digest(dir / f);
  manifest["files"] = digests;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

BenchResult cmd_run(const BenchConfig& cfg) {
  validate(cfg);
  // Everything is computed before the output directory is touched, so a
  // failing run leaves no partial outputs behind.
  BenchResult result = run_pipeline(cfg, load_dataset(cfg));
  write_outputs(cfg, result);
  return result;
}

void cmd_simulate(const SimulateOptions& opts) {
  if (opts.n_records < 1) fail(ErrorKind::InvalidArgument, "--n-records must be at least 1");
  if (!(opts.noise_rms >= 0.0) || !std::isfinite(opts.noise_rms)) {
    fail(ErrorKind::InvalidArgument, "--noise-rms must be non-negative");
  }
  if (!(opts.duration >= 60.0)) fail(ErrorKind::InvalidArgument, "--duration must be at least 60 s");
  if (opts.output.empty()) fail(ErrorKind::InvalidArgument, "--out is required");
  make_output_dir(opts.output);

  json records = json::array();
  for (std::size_t i = 0; i < opts.n_records; ++i) {
    const SimConfig cfg = dataset_config(i, opts.noise_rms, opts.seed, opts.duration);
    const SimRecord rec = simulate_record(cfg);
    const std::string id = record_id_for(i);
    write_record(to_ecg_record(rec, id), opts.output / id, opts.format);
    write_truth(rec, opts.output / id);
    records.push_back({{"id", id},
                       {"seed", cfg.seed},
                       {"af_burden", cfg.af_burden},
                       {"f0", cfg.f0},
                       {"fwave_amplitude_mv", cfg.fwave_amplitude}});
  }
  json manifest = {{"tool", "fwbench simulate"},
                   {"version", kVersion},
                   {"n_records", opts.n_records},
                   {"noise_rms_uv", opts.noise_rms},
                   {"duration_s", opts.duration},
                   {"fs", SimConfig{}.fs},
                   {"master_seed", opts.seed},
                   {"format", opts.format == SignalFormat::Csv ? "csv" : "f32le"},
                   {"records", records}};
  write_text(opts.output / "manifest.json", manifest.dump(2) + "\n");
}

StatsReport analyze_demographics(const FeatureTable& features, const std::map<std::string, RecordMeta>& meta) {
  StatsReport report;
  std::vector<std::pair<Method, std::string>> keys;
  for (const auto& r : features) {
    const auto key = std::make_pair(r.method, r.lead);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  std::set<std::string> no_sex, no_age;
  for (const auto& r : features) {
    if (r.label != WindowLabel::AF) continue;
    const auto it = meta.find(r.record_id);
    if (it == meta.end() || !it->second.sex) no_sex.insert(r.record_id);
    if (it == meta.end() || !it->second.age) no_age.insert(r.record_id);
  }
  if (!no_sex.empty()) {
    report.warnings.push_back(std::to_string(no_sex.size()) + " records without sex are skipped in the sex analysis");
  }
  if (!no_age.empty()) {
    report.warnings.push_back(std::to_string(no_age.size()) + " records without age are skipped in the age analysis");
  }

  const std::array<const char*, 3> age_names{"<60", "60-74", ">=75"};
  for (const auto& [method, lead] : keys) {
    for (std::size_t f = 0; f < kFeatureNames.size(); ++f) {
      std::vector<double> female, male;
      std::array<std::vector<double>, 3> by_age;
      for (const auto& r : features) {
        if (r.method != method || r.lead != lead || r.label != WindowLabel::AF) continue;
        double value = 0.0;
        if (f == 0) {
          if (!r.features.a_pp) continue;
          value = *r.features.a_pp;
        } else {
          const std::array<double, 4> rest{r.features.daf, r.features.p_daf, r.features.p_in, r.features.p_out};
          value = rest[f - 1];
        }
        const auto it = meta.find(r.record_id);
        if (it == meta.end()) continue;
        if (it->second.sex) (*it->second.sex == Sex::F ? female : male).push_back(value);
        if (it->second.age) by_age[static_cast<std::size_t>(age_group(*it->second.age))].push_back(value);
      }
      const std::string feature = kFeatureNames[f];
      if (!female.empty() && !male.empty()) {
        report.sex.push_back({method, lead, feature, female.size(), male.size(), mann_whitney_u(female, male)});
      }
      if (!female.empty()) report.boxes.push_back({method, lead, feature, "F", box_stats(female)});
      if (!male.empty()) report.boxes.push_back({method, lead, feature, "M", box_stats(male)});
      for (std::size_t g = 0; g < 3; ++g) {
        if (!by_age[g].empty()) report.boxes.push_back({method, lead, feature, age_names[g], box_stats(by_age[g])});
      }
    }
  }
  return report;
}

StatsReport cmd_stats(const fs::path& features_csv, const fs::path& dataset, const fs::path& output) {
  const FeatureTable table = read_feature_table(features_csv);
  if (!fs::is_directory(dataset)) fail(ErrorKind::MissingFile, "dataset directory not found: " + dataset.string());
  std::map<std::string, RecordMeta> meta;
  for (const auto& r : table) {
    if (meta.count(r.record_id)) continue;
    RecordMeta m;
    const fs::path path = dataset / r.record_id / "meta.json";
    if (fs::exists(path)) {
      std::ifstream in(path, std::ios::binary);
      try {
        const json j = json::parse(in);
        if (j.contains("age") && !j["age"].is_null()) m.age = j["age"].get<int>();
        if (j.contains("sex") && !j["sex"].is_null()) m.sex = parse_sex(j["sex"].get<std::string>());
      } catch (const json::exception& e) {
        fail(ErrorKind::MalformedInput, path.string() + ": " + e.what());
      }
    }
    meta.emplace(r.record_id, m);
  }
  StatsReport report = analyze_demographics(table, meta);

  make_output_dir(output);
  std::string sex = "method,lead,feature,n_f,n_m,u,p,exact,significant\n";
  for (const auto& s : report.sex) {
    sex += std::string(to_string(s.method)) + "," + s.lead + "," + s.feature + "," + std::to_string(s.n_f) + "," +
           std::to_string(s.n_m) + "," + number(s.test.u) + "," + number(s.test.p) + "," +
           (s.test.exact ? "1" : "0") + "," + (s.test.p < kSignificance ? "1" : "0") + "\n";
  }
  write_text(output / "stats_sex.csv", sex);
  std::string box = "method,lead,feature,group,n,q1,median,q3\n";
  for (const auto& b : report.boxes) {
    box += std::string(to_string(b.method)) + "," + b.lead + "," + b.feature + "," + b.group + "," +
           std::to_string(b.box.n) + "," + number(b.box.q1) + "," + number(b.box.median) + "," + number(b.box.q3) +
           "\n";
  }
  write_text(output / "stats_box.csv", box);
  return report;
}

void cmd_extract(const BenchConfig& cfg, const ExtractRequest& req) {
  validate(cfg);
  const LoadedData data = load_dataset(cfg);
  const auto it = std::find_if(data.records.begin(), data.records.end(),
                               [&](const EcgRecord& r) { return r.record_id == req.record_id; });
  if (it == data.records.end()) fail(ErrorKind::InvalidArgument, "no record '" + req.record_id + "'");
  const auto fs = static_cast<double>(it->sampling_rate);
  const Signal x = preprocess(it->lead(req.lead).samples, fs, cfg.filter);
  const auto windows = segment_windows(*it, req.lead);
  if (req.window < 0 || req.window >= static_cast<Index>(windows.size())) {
    fail(ErrorKind::OutOfRange, "window index out of range");
  }
  const Window& w = windows[static_cast<std::size_t>(req.window)];
  const QrsAnnotations q = detect_qrs(x, fs).slice(w.start, w.end());
  const FwaveSignal d = extract(req.method, x.segment(w.start, w.length), q, cfg.extract);
  std::string s = "sample,ecg,d,qrs_mask\n";
  for (Index i = 0; i < w.length; ++i) {
    s += std::to_string(w.start + i) + "," + number(x[w.start + i]) + "," + number(d.d[i]) + "," +
         (d.qrs_mask[i] ? "1" : "0") + "\n";
  }
  if (req.output.has_parent_path()) make_output_dir(req.output.parent_path());
  write_text(req.output, s);
}

}  // namespace fwbench
