#include "fwbench/bench.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int report(const fwbench::BenchResult& result) {
  for (const auto& lr : result.ranking.per_lead) {
    std::cout << "lead " << lr.lead << ":";
    for (std::size_t i = 0; i < lr.order.size(); ++i) {
      const auto* s = result.ranking.find(lr.order[i], lr.lead);
      std::cout << "  " << lr.rank[i] << ". " << fwbench::to_string(lr.order[i]) << " " << s->auroc.median;
    }
    std::cout << (lr.tie_at_top ? "  (tie at top)" : "") << "\n";
  }
  return fwbench::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rank f-wave extraction methods by AF classification performance"};
  app.require_subcommand(1);
  app.set_version_flag("--version", fwbench::kVersion);

  fwbench::SimulateOptions sim;
  std::string sim_format = "csv";
  auto* simulate = app.add_subcommand("simulate", "Write a simulated AF/NSR dataset with ground truth");
  simulate->add_option("--n-records", sim.n_records, "Number of records")->default_val(20);
  simulate->add_option("--noise-rms", sim.noise_rms, "Noise level in microvolts")->default_val(0.0);
  simulate->add_option("--seed", sim.seed, "Master seed")->default_val(1);
  simulate->add_option("--duration", sim.duration, "Record length in seconds")->default_val(300.0);
  simulate->add_option("--format", sim_format, "Signal file format")->check(CLI::IsMember({"csv", "f32"}));
  simulate->add_option("--out", sim.output, "Output directory")->required();

  std::string run_config;
  std::string run_output;
  int run_threads = -1;
  auto* run = app.add_subcommand("run", "Run the full benchmark described by a config file");
  run->add_option("config", run_config, "JSON config file")->required();
  run->add_option("--out", run_output, "Override the output directory");
  run->add_option("--threads", run_threads, "Override the worker count (0 = all cores)");

  std::string stats_features, stats_dataset, stats_output;
  auto* stats = app.add_subcommand("stats", "Sex and age analysis of AF feature distributions");
  stats->add_option("features", stats_features, "features.csv written by run")->required();
  stats->add_option("--dataset", stats_dataset, "Dataset directory holding meta.json files")->required();
  stats->add_option("--out", stats_output, "Output directory")->required();

  std::string ex_config, ex_method = "TS_PCA";
  fwbench::ExtractRequest ex;
  auto* extract = app.add_subcommand("extract", "Dump the extracted f-wave signal of one window");
  extract->add_option("config", ex_config, "JSON config file")->required();
  extract->add_option("--record", ex.record_id, "Record id")->required();
  extract->add_option("--lead", ex.lead, "Lead name")->required();
  extract->add_option("--window", ex.window, "Window index")->default_val(0);
  extract->add_option("--method", ex_method, "ABS, ABS_sc1, ABS_sc2 or TS_PCA")->default_val("TS_PCA");
  extract->add_option("--out", ex.output, "Output CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : fwbench::kExitUsage;
  }

  try {
    if (*simulate) {
      sim.format = sim_format == "f32" ? fwbench::SignalFormat::Float32 : fwbench::SignalFormat::Csv;
      fwbench::cmd_simulate(sim);
      std::cout << "wrote " << sim.n_records << " records to " << sim.output.string() << "\n";
      return fwbench::kExitOk;
    }
    if (*run) {
      fwbench::BenchConfig cfg = fwbench::load_config(run_config);
      if (!run_output.empty()) cfg.output = run_output;
      if (run_threads >= 0) cfg.threads = run_threads;
      return report(fwbench::cmd_run(cfg));
    }
    if (*stats) {
      const auto result = fwbench::cmd_stats(stats_features, stats_dataset, stats_output);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      return fwbench::kExitOk;
    }
    if (*extract) {
      const fwbench::BenchConfig cfg = fwbench::load_config(ex_config);
      ex.method = fwbench::parse_method(ex_method);
      fwbench::cmd_extract(cfg, ex);
      return fwbench::kExitOk;
    }
  } catch (const fwbench::Error& e) {
    std::cerr << "error (" << fwbench::to_string(e.kind()) << "): " << e.what() << "\n";
    return fwbench::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return fwbench::kExitOk;
}
