#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clbench/checkpoint.hpp"
#include "clbench/config.hpp"
#include "clbench/csv.hpp"
#include "clbench/errors.hpp"
#include "clbench/experiment.hpp"

namespace fs = std::filesystem;
using namespace clbench;

namespace {

struct CommonFlags {
  std::string seeds;
  std::string out;
  std::vector<std::string> overrides;
  int jobs = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--seeds", flags.seeds, "Comma-separated seed list");
  cmd->add_option("--set", flags.overrides, "Override a config key (key=value), repeatable");
  cmd->add_option("--jobs", flags.jobs, "Seeds run concurrently");
}

void apply_common(ExperimentConfig& config, const CommonFlags& flags) {
  for (const auto& kv : flags.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!flags.seeds.empty()) config.seeds = parse_seed_list(flags.seeds);
  if (flags.jobs > 0) config.jobs = flags.jobs;
  config.validate();
}

void print_record(const ResultRecord& r) {
  std::cout << r.method << "  ACC " << format_double(r.acc_mean * 100.0).substr(0, 6) << " +- "
            << format_double(r.acc_std * 100.0).substr(0, 5);
  if (r.bwt_mean) std::cout << "  BWT " << format_double(*r.bwt_mean * 100.0).substr(0, 7);
  std::cout << "  (" << r.succeeded << "/" << r.seeds.size() << " seeds)\n";
  for (const auto& s : r.seeds)
    if (!s.ok) std::cerr << "seed " << s.seed << " failed: " << s.error << '\n';
}

int cmd_run(const std::string& config_path, const CommonFlags& flags) {
  auto config = load_config(config_path);
  if (!flags.out.empty()) config.output_dir = flags.out;
  apply_common(config, flags);
  auto record = run_experiment(config);
  print_record(record);
  return record.failed() ? 2 : 0;
}

int cmd_compare(const std::string& paths, bool paired, const CommonFlags& flags) {
  std::vector<ExperimentConfig> configs;
  std::stringstream ss(paths);
  std::string p;
  while (std::getline(ss, p, ',')) {
    if (p.empty()) continue;
    auto c = load_config(p);
    c.output_dir.clear();
    apply_common(c, flags);
    configs.push_back(std::move(c));
  }
  if (configs.empty()) throw ConfigError("--configs names no files");
  auto table = compare_methods(configs, paired);
  if (flags.out.empty()) {
    write_comparison_csv(table, std::cout);
    if (paired) {
      std::cout << '\n';
      write_win_matrix_csv(table, std::cout);
    }
  } else {
    fs::path dir = resolve_output_dir(flags.out);
    fs::create_directories(dir);
    std::ofstream c(dir / "comparison.csv");
    write_comparison_csv(table, c);
    if (paired) {
      std::ofstream w(dir / "win_matrix.csv");
      write_win_matrix_csv(table, w);
    }
    write_comparison_csv(table, std::cout);
  }
  return 0;
}

int cmd_probe(const std::string& config_path, const std::string& checkpoint_path, const CommonFlags& flags) {
  auto config = load_config(config_path);
  apply_common(config, flags);
  auto stream = build_stream(config);
  auto ckpt = load_checkpoint(checkpoint_path);
  ModelConfig mc = ckpt.model.config();
  Learner learner(mc, config.strategy, ckpt.buffer.capacity(), config.seeds.front());
  learner.model = ckpt.model;
  learner.buffer = ckpt.buffer;
  auto report = run_drift_probe(config, stream, learner, config.seeds.front());

  std::ostringstream out;
  out << "source,task,acc_before,acc_after\n";
  for (const auto& [name, r] : {std::pair{"last_task", &report.last_task}, std::pair{"balanced", &report.balanced}})
    for (std::size_t t = 0; t < r->before.size(); ++t)
      out << name << ',' << t + 1 << ',' << format_double(r->before[t]) << ',' << format_double(r->after[t]) << '\n';
  if (flags.out.empty()) {
    std::cout << out.str();
  } else {
    std::ofstream f(resolve_output_dir(flags.out));
    f << out.str();
  }
  return 0;
}

int cmd_gen_stream(const std::string& config_path, const std::string& out_path, const CommonFlags& flags) {
  auto config = load_config(config_path);
  apply_common(config, flags);
  auto stream = make_gaussian_stream(config.stream);
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  write_stream_csv(stream, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual-learning replay benchmark"};
  app.require_subcommand(1);

  std::string config_path, configs, checkpoint, out_path;
  bool paired = false;
  CommonFlags run_flags, cmp_flags, probe_flags, gen_flags;

  auto* run = app.add_subcommand("run", "Train and evaluate one configuration over its seeds");
  run->add_option("--config", config_path, "Config file")->required();
  run->add_option("--out", run_flags.out, "Output directory");
  add_common(run, run_flags);

  auto* cmp = app.add_subcommand("compare", "Run several configurations and tabulate them");
  cmp->add_option("--configs", configs, "Comma-separated config files")->required();
  cmp->add_flag("--paired", paired, "Per-seed win rates (configs must share stream and seeds)");
  cmp->add_option("--out", cmp_flags.out, "Directory for comparison.csv and win_matrix.csv");
  add_common(cmp, cmp_flags);

  auto* probe = app.add_subcommand("probe-drift", "EMA drift probe on a saved checkpoint");
  probe->add_option("--config", config_path, "Config file")->required();
  probe->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  probe->add_option("--out", probe_flags.out, "Output CSV (default stdout)");
  add_common(probe, probe_flags);

  auto* gen = app.add_subcommand("gen-stream", "Write the configured synthetic stream as CSV");
  gen->add_option("--config", config_path, "Config file")->required();
  gen->add_option("--out", out_path, "Output CSV")->required();
  add_common(gen, gen_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*run) return cmd_run(config_path, run_flags);
    if (*cmp) return cmd_compare(configs, paired, cmp_flags);
    if (*probe) return cmd_probe(config_path, checkpoint, probe_flags);
    if (*gen) return cmd_gen_stream(config_path, out_path, gen_flags);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
