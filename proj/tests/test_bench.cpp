#include "fwbench/bench.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace fwbench;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

BenchConfig small_config(const fs::path& out) {
  BenchConfig cfg = parse_config(R"({
    "simulate": {"n_records": 30, "noise_rms": 50, "duration": 180, "seed": 3},
    "grid": {"n_estimators": [100], "max_depth": [2, 3], "max_features": [2], "max_samples": [0.5]},
    "bootstrap_rounds": 20, "seed": 5, "threads": 1})");
  cfg.output = out;
  return cfg;
}

FeatureRow af_row(const std::string& id, double a_pp) {
  FeatureRow r;
  r.record_id = id;
  r.lead = "V1";
  r.method = Method::TsPca;
  r.label = WindowLabel::AF;
  r.features.method = Method::TsPca;
  r.features.a_pp = a_pp;
  r.features.daf = 6.0;
  r.features.p_daf = 1e-3;
  r.features.p_in = 1e-2;
  r.features.p_out = 2e-2;
  return r;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FWBENCH_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, Defaults) {
  const BenchConfig c = parse_config(R"({"simulate": {}})");
  ASSERT_TRUE(c.simulate);
  EXPECT_EQ(c.simulate->n_records, 100u);
  EXPECT_EQ(c.methods.size(), 4u);
  EXPECT_EQ(c.grid.size(), 240u);
  EXPECT_EQ(c.cv_folds, 5);
  EXPECT_DOUBLE_EQ(c.train_ratio, 0.8);
  EXPECT_EQ(c.bootstrap_rounds, 100);
  EXPECT_NO_THROW(validate(c));
}

TEST(Config, Rejections) {
  const auto kind_of = [](const std::string& text) {
    try {
      validate(parse_config(text));
      return std::optional<ErrorKind>{};
    } catch (const Error& e) {
      return std::optional<ErrorKind>{e.kind()};
    }
  };
  EXPECT_EQ(kind_of(R"({"simulate": {}, "colour": 1})"), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of(R"({"simulate": {"noise": 1}})"), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of(R"({})"), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of(R"({"simulate": {}, "dataset": "/tmp"})"), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of(R"({"simulate": {}, "methods": ["XYZ"]})"), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of(R"({"simulate": {}, "grid": {"max_depth": [9]}})"), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of(R"({"simulate": {}, "train_ratio": 1.5})"), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of(R"({"simulate": {"noise_rms": -1}})"), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of("{not json"), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of(R"({"dataset": "/definitely/not/here"})"), ErrorKind::MissingFile);
}

TEST(Config, EchoRoundTrips) {
  const BenchConfig c = small_config("/tmp/x");
  const BenchConfig d = parse_config(config_json(c));
  EXPECT_EQ(config_json(c), config_json(d));
  EXPECT_EQ(config_json(c).find("/tmp/x"), std::string::npos);
}

TEST(ExitCodes, PerErrorClass) {
  EXPECT_EQ(exit_code(ErrorKind::InvalidArgument), 2);
  EXPECT_EQ(exit_code(ErrorKind::MissingFile), 3);
  EXPECT_EQ(exit_code(ErrorKind::MalformedInput), 3);
  EXPECT_EQ(exit_code(ErrorKind::UnknownLead), 3);
  EXPECT_EQ(exit_code(ErrorKind::TooFewBeats), 4);
  EXPECT_EQ(exit_code(ErrorKind::SingleClass), 4);
  EXPECT_EQ(exit_code(ErrorKind::Io), 5);
}

TEST(Simulate, WritesRecordsAndManifest) {
  fwtest::TempDir a("sima"), b("simb");
  SimulateOptions o;
  o.duration = 60.0;
  o.output = a.path() / "out";
  cmd_simulate(o);
  int dirs = 0;
  for (const auto& e : fs::directory_iterator(o.output)) {
    if (!e.is_directory()) continue;
    ++dirs;
    EXPECT_TRUE(fs::exists(e.path() / "truth.csv"));
    EXPECT_NO_THROW(load_record(e.path()));
  }
  EXPECT_EQ(dirs, 20);
  ASSERT_TRUE(fs::exists(o.output / "manifest.json"));

  SimulateOptions p = o;
  p.output = b.path() / "out";
  cmd_simulate(p);
  EXPECT_EQ(file_digest(o.output / "manifest.json"), file_digest(p.output / "manifest.json"));
  EXPECT_EQ(file_digest(o.output / "sim0007" / "signal.csv"), file_digest(p.output / "sim0007" / "signal.csv"));
}

TEST(Simulate, RejectsNegativeNoise) {
  fwtest::TempDir t("simneg");
  SimulateOptions o;
  o.noise_rms = -1.0;
  o.output = t.path() / "out";
  EXPECT_THROW(cmd_simulate(o), Error);
  EXPECT_FALSE(fs::exists(o.output));
}

TEST(Run, MissingDatasetLeavesNoOutput) {
  fwtest::TempDir t("missing");
  BenchConfig cfg;
  cfg.dataset = t.path() / "nope";
  cfg.output = t.path() / "out";
  try {
    cmd_run(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingFile);
  }
  EXPECT_FALSE(fs::exists(cfg.output));
}

TEST(Run, SmallSimulationEndToEnd) {
  fwtest::TempDir t("run");
  const BenchConfig cfg = small_config(t.path() / "out");
  const BenchResult r = cmd_run(cfg);

  ASSERT_EQ(r.census.size(), 1u);
  const CensusRow& c = r.census[0];
  Index excluded = 0;
  for (const auto& [reason, count] : c.excluded) excluded += count;
  EXPECT_EQ(c.included + excluded, c.total);
  EXPECT_EQ(c.total, 30 * 3);
  EXPECT_EQ(static_cast<Index>(r.windows.size()), c.total);

  EXPECT_EQ(r.methods.size(), 4u);
  EXPECT_EQ(r.features.size(), static_cast<std::size_t>(4 * c.included));
  EXPECT_EQ(r.rms.size(), 4u);
  for (const auto& m : r.methods) {
    EXPECT_GE(m.auroc.median, 0.0);
    EXPECT_LE(m.auroc.median, 1.0);
    EXPECT_LE(m.auroc.ci_low, m.auroc.ci_high);
    EXPECT_EQ(m.model.trees.size(), static_cast<std::size_t>(m.search.best.n_estimators));
  }

  for (const char* f : {"features.csv", "windows.csv", "census.csv", "ranking.csv", "rms_error.csv", "report.json",
                        "manifest.json"}) {
    EXPECT_TRUE(fs::exists(cfg.output / f)) << f;
  }
  EXPECT_TRUE(fs::exists(cfg.output / "models" / "V1_TS_PCA.json"));

  // feature table round trip
  const FeatureTable back = read_feature_table(cfg.output / "features.csv");
  ASSERT_EQ(back.size(), r.features.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].record_id, r.features[i].record_id);
    EXPECT_EQ(back[i].features.p_in, r.features[i].features.p_in);
    EXPECT_EQ(back[i].features.a_pp, r.features[i].features.a_pp);
  }

  // a saved model scores the same as the in-memory one
  const TrainedForest loaded = load_forest(cfg.output / "models" / "V1_TS_PCA.json");
  const Dataset d = to_dataset(back);
  EXPECT_EQ(predict_proba(loaded, d.x.topRows(5)), predict_proba(r.methods.back().model, d.x.topRows(5)));
}

TEST(Run, SingleMethod) {
  fwtest::TempDir t("one");
  BenchConfig cfg = small_config(t.path() / "out");
  cfg.methods = {Method::Abs};
  const BenchResult r = cmd_run(cfg);
  ASSERT_EQ(r.methods.size(), 1u);
  EXPECT_EQ(r.methods[0].method, Method::Abs);
  EXPECT_EQ(r.ranking.per_lead[0].order.size(), 1u);
  const std::string report = slurp(cfg.output / "report.json");
  EXPECT_NE(report.find("\"ABS\""), std::string::npos);
  EXPECT_EQ(report.find("TS_PCA"), std::string::npos);
}

TEST(Stats, InjectedDifference) {
  FeatureTable table;
  std::map<std::string, RecordMeta> meta;
  for (int i = 0; i < 10; ++i) {
    const std::string f = "f" + std::to_string(i), m = "m" + std::to_string(i);
    table.push_back(af_row(f, 0.05 + 0.001 * i));
    table.push_back(af_row(m, 0.10 + 0.001 * i));
    meta[f] = {50 + i, Sex::F};
    meta[m] = {70 + i, Sex::M};
  }
  const StatsReport r = analyze_demographics(table, meta);
  bool seen = false;
  for (const auto& s : r.sex) {
    if (s.feature != "a_pp") {
      EXPECT_DOUBLE_EQ(s.test.p, 1.0);  // identical values in both groups
      continue;
    }
    seen = true;
    EXPECT_EQ(s.n_f, 10u);
    EXPECT_EQ(s.n_m, 10u);
    EXPECT_LT(s.test.p, kSignificance);
  }
  EXPECT_TRUE(seen);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Stats, MissingAgesGiveNoAgeGroups) {
  FeatureTable table;
  std::map<std::string, RecordMeta> meta;
  for (int i = 0; i < 6; ++i) {
    const std::string id = "r" + std::to_string(i);
    table.push_back(af_row(id, 0.1));
    meta[id] = {std::nullopt, i % 2 ? Sex::M : Sex::F};
  }
  const StatsReport r = analyze_demographics(table, meta);
  for (const auto& b : r.boxes) EXPECT_TRUE(b.group == "F" || b.group == "M") << b.group;
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(Stats, CommandWritesTables) {
  fwtest::TempDir t("stats");
  SimulateOptions o;
  o.n_records = 6;
  o.duration = 120.0;
  o.output = t.path() / "data";
  cmd_simulate(o);

  FeatureTable table;
  for (int i = 0; i < 6; ++i) table.push_back(af_row("sim000" + std::to_string(i), 0.1 * i));
  write_feature_table(table, t.path() / "features.csv");
  const StatsReport r = cmd_stats(t.path() / "features.csv", o.output, t.path() / "stats");
  EXPECT_TRUE(fs::exists(t.path() / "stats" / "stats_sex.csv"));
  EXPECT_TRUE(fs::exists(t.path() / "stats" / "stats_box.csv"));
  EXPECT_FALSE(r.boxes.empty());
}

TEST(Cli, ExitCodes) {
  fwtest::TempDir t("cli");
  EXPECT_EQ(run_cli("--version"), 0);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("simulate --noise-rms -1 --out " + (t.path() / "a").string()), 2);
  EXPECT_EQ(run_cli("simulate --n-records 2 --duration 60 --out " + (t.path() / "b").string()), 0);
  EXPECT_TRUE(fs::exists(t.path() / "b" / "sim0001" / "truth.csv"));
  EXPECT_EQ(run_cli("run " + (t.path() / "missing.json").string()), 3);

  std::ofstream(t.path() / "cfg.json") << R"({"dataset": ")" << (t.path() / "none").string() << R"("})";
  EXPECT_EQ(run_cli("run " + (t.path() / "cfg.json").string() + " --out " + (t.path() / "o").string()), 3);
  EXPECT_FALSE(fs::exists(t.path() / "o"));
}
