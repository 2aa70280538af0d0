#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "clbench/config.hpp"
#include "clbench/evaluation.hpp"
#include "clbench/scenario.hpp"
#include "clbench/strategies.hpp"

namespace clbench {

struct DriftReport {
  DriftResult last_task;  // refreshed with last-task batches only
  DriftResult balanced;   // refreshed with balanced buffer batches
};

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  AccuracyMatrix accuracy{0};
  double acc = 0.0;
  std::optional<double> bwt;
  FrozenEmaAudit audit;
  std::size_t optimizer_steps = 0;
  std::optional<DriftReport> drift;
};

struct ResultRecord {
  std::string method;
  std::string fingerprint;
  std::vector<SeedResult> seeds;
  std::size_t succeeded = 0;
  double acc_mean = 0.0;
  double acc_std = 0.0;  // sample standard deviation
  std::optional<double> bwt_mean;
  std::optional<double> bwt_std;
  double wall_clock_seconds = 0.0;

  bool failed() const { return succeeded == 0; }
  /// Seeds that completed, in config order.
  std::vector<const SeedResult*> completed() const;
};

Classifier classifier_for(Method method);

/// Builds (or loads) the task stream an experiment trains on.
TaskStream build_stream(const ExperimentConfig& config);

/// Called once per seed after training, before the learner is discarded.
using SeedObserver = std::function<void(const TaskStream&, Learner&, SeedResult&)>;

/// Trains one seed through every task, filling the accuracy matrix row by
/// row. Errors propagate.
SeedResult run_seed(const ExperimentConfig& config, const TaskStream& stream, std::uint64_t seed,
                    const SeedObserver& observer = {});

/// Runs every seed (a failing seed is recorded and the others proceed),
/// aggregates, and persists results when config.output_dir is set.
ResultRecord run_experiment(const ExperimentConfig& config, const SeedObserver& observer = {});

/// Recomputes aggregates from the per-seed entries.
void aggregate(ResultRecord& record);

/// Output directory with CLBENCH_OUT_DIR applied as the root for relative
/// paths.
std::string resolve_output_dir(const std::string& dir);

/// results.csv: `seed,method,after_task,eval_task,accuracy` (1-based tasks).
void write_results_csv(const ResultRecord& record, std::ostream& out);
/// summary.json: method, acc_mean, acc_std, bwt_mean, bwt_std, seeds,
/// fingerprint (plus bookkeeping fields).
std::string summary_json(const ResultRecord& record);
void persist(const ResultRecord& record, const std::string& dir);

/// Per-seed accuracy matrices read back from results.csv.
std::vector<std::pair<std::uint64_t, AccuracyMatrix>> read_results_csv(std::istream& in);

struct ComparisonRow {
  std::string method;
  double acc_mean = 0.0;
  double acc_std = 0.0;
  std::optional<double> bwt_mean;
  std::optional<double> bwt_std;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  // win_rate[i][j]: share of paired seeds where row i's ACC beats row j's,
  // ties counting one half. Empty unless paired.
  std::vector<std::vector<double>> win_rate;
  std::vector<std::vector<std::size_t>> wins;  // strict wins
  std::size_t paired_seeds = 0;
};

ComparisonTable compare_methods(const std::vector<ExperimentConfig>& configs, bool paired_seeds);
/// Same over already computed records; paired mode requires equal seed lists.
ComparisonTable compare_records(const std::vector<ResultRecord>& records, bool paired_seeds);

/// Five columns: method,acc_mean,acc_std,bwt_mean,bwt_std.
void write_comparison_csv(const ComparisonTable& table, std::ostream& out);
void write_win_matrix_csv(const ComparisonTable& table, std::ostream& out);

/// Batches used by the drift probe: `count` full-size batches of the last
/// task, and the same number of balanced batches (buffer batch + top-up).
std::vector<Batch> last_task_batches(const Task& task, std::size_t batch_size, std::size_t count, Rng& rng);
std::vector<Batch> balanced_batches(const Task& task, const ReplayBuffer& buffer, std::size_t batch_size,
                                    std::size_t count, Rng& rng);

DriftReport run_drift_probe(const ExperimentConfig& config, const TaskStream& stream, Learner& learner,
                            std::uint64_t seed);

}  // namespace clbench
