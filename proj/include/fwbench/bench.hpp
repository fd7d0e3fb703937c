#pragma once

#include "fwbench/error.hpp"
#include "fwbench/evaluate.hpp"
#include "fwbench/extract.hpp"
#include "fwbench/filter.hpp"
#include "fwbench/record.hpp"
#include "fwbench/sim.hpp"
#include "fwbench/stats.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fwbench {

inline constexpr const char* kVersion = "1.0.0";

/// Process exit status per error class.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitInput = 3,
  kExitPipeline = 4,
  kExitOutput = 5,
};

int exit_code(ErrorKind kind);

struct SimulationSpec {
  std::size_t n_records = 100;
  double noise_rms = 0.0;
  double duration = 300.0;
  std::uint64_t seed = 1;
};

/// Everything `run` needs. Read from a JSON file; see README for the keys.
struct BenchConfig {
  std::optional<std::filesystem::path> dataset;
  std::optional<SimulationSpec> simulate;
  std::vector<std::string> leads;  ///< empty: every lead of the first record
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  FilterSpec filter;
  Index welch_segment = kDefaultWelchSegment;
  ExtractParams extract;
  RfGrid grid;
  int cv_folds = 5;
  double train_ratio = 0.8;
  int bootstrap_rounds = 100;
  std::uint64_t seed = 1;
  int threads = 0;  ///< 0: hardware concurrency
  std::filesystem::path output = "fwbench-out";
};

/// Throws InvalidArgument / MissingFile on a bad configuration.
void validate(const BenchConfig& cfg);
BenchConfig parse_config(const std::string& json_text);
BenchConfig load_config(const std::filesystem::path& path);
/// Canonical JSON echo (the output directory is left out).
std::string config_json(const BenchConfig& cfg);

struct CensusRow {
  std::string lead;
  Index total = 0;
  Index included = 0;
  std::map<ExclusionReason, Index> excluded;
};

struct RmsRow {
  Method method = Method::Abs;
  std::string lead;
  double inside = 0.0;   ///< mean over AF windows, microvolts
  double outside = 0.0;
  Index windows = 0;
};

struct MethodResult {
  Method method = Method::Abs;
  std::string lead;
  Index n_train = 0;
  Index n_test = 0;
  std::size_t train_records = 0;
  std::size_t test_records = 0;
  GridSearchResult search;
  AurocSummary auroc;
  TrainedForest model;
};

struct BenchResult {
  std::vector<Window> windows;
  std::vector<CensusRow> census;
  FeatureTable features;
  std::vector<MethodResult> methods;
  RankingReport ranking;
  std::vector<RmsRow> rms;  ///< only when ground truth is available
};

/// Dataset records plus optional per-record ground truth.
struct LoadedData {
  std::vector<EcgRecord> records;
  std::vector<std::optional<SimTruth>> truth;
};

LoadedData load_dataset(const BenchConfig& cfg);

/// One lead after preprocessing and detection, with every window labelled
/// and screened for exclusion.
struct ScreenedLead {
  Signal x;
  QrsAnnotations qrs;
  std::vector<Window> windows;
};

ScreenedLead screen_lead(const EcgRecord& rec, const std::string& lead_name, const FilterSpec& filter = {});

/// load, filter, detect, window, extract, featurize, split, search, train,
/// bootstrap and rank. Nothing is written.
BenchResult run_pipeline(const BenchConfig& cfg, const LoadedData& data);
BenchResult run_pipeline(const BenchConfig& cfg);

/// Writes features.csv, census.csv, ranking.csv, report.json, rms_error.csv
/// (with ground truth), models/ and manifest.json into cfg.output.
void write_outputs(const BenchConfig& cfg, const BenchResult& result);

BenchResult cmd_run(const BenchConfig& cfg);

struct SimulateOptions {
  std::size_t n_records = 20;
  double noise_rms = 0.0;
  std::uint64_t seed = 1;
  double duration = 300.0;
  SignalFormat format = SignalFormat::Csv;
  std::filesystem::path output;
};

/// One directory per record (with truth.csv) plus manifest.json.
void cmd_simulate(const SimulateOptions& opts);

struct SexTest {
  Method method = Method::Abs;
  std::string lead;
  std::string feature;
  std::size_t n_f = 0;
  std::size_t n_m = 0;
  MannWhitneyResult test;
};

struct GroupBox {
  Method method = Method::Abs;
  std::string lead;
  std::string feature;
  std::string group;  ///< "F", "M", "<60", "60-74", ">=75"
  BoxStats box;
};

struct RecordMeta {
  std::optional<int> age;
  std::optional<Sex> sex;
};

struct StatsReport {
  std::vector<SexTest> sex;
  std::vector<GroupBox> boxes;
  std::vector<std::string> warnings;
};

/// Sex and age analysis over AF rows of the feature table.
StatsReport analyze_demographics(const FeatureTable& features,
                                 const std::map<std::string, RecordMeta>& meta);

/// Reads features.csv and the dataset's meta.json files, writes
/// stats_sex.csv and stats_box.csv into `output`.
StatsReport cmd_stats(const std::filesystem::path& features_csv, const std::filesystem::path& dataset,
                      const std::filesystem::path& output);

struct ExtractRequest {
  std::string record_id;
  std::string lead;
  Index window = 0;
  Method method = Method::TsPca;
  std::filesystem::path output;  ///< CSV file
};

/// Dumps one window's filtered ECG, extracted d(n) and QRS mask.
void cmd_extract(const BenchConfig& cfg, const ExtractRequest& req);

/// FNV-1a of a file's bytes, hex.
std::string file_digest(const std::filesystem::path& path);

}  // namespace fwbench
