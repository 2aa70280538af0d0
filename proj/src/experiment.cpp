#include "clbench/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include <json.hpp>

#include "clbench/checkpoint.hpp"
#include "clbench/csv.hpp"
#include "clbench/errors.hpp"

namespace clbench {

namespace fs = std::filesystem;

Classifier classifier_for(Method method) {
  return is_icarl_family(method) ? Classifier::Ncm : Classifier::LinearHead;
}

TaskStream build_stream(const ExperimentConfig& config) {
  if (!config.stream_csv.empty()) return read_stream_csv(config.stream_csv);
  return make_gaussian_stream(config.stream);
}

std::vector<const SeedResult*> ResultRecord::completed() const {
  std::vector<const SeedResult*> out;
  for (const auto& s : seeds)
    if (s.ok) out.push_back(&s);
  return out;
}

std::vector<Batch> last_task_batches(const Task& task, std::size_t batch_size, std::size_t count, Rng& rng) {
  std::vector<Batch> out;
  if (count == 0) return out;
  if (task.train.size() < batch_size) throw ContractError("last task smaller than one batch");
  while (out.size() < count) {
    for (auto& b : iterate_online(task.train, batch_size, rng)) {
      if (b.size() != batch_size) continue;
      out.push_back(std::move(b));
      if (out.size() == count) break;
    }
  }
  return out;
}

std::vector<Batch> balanced_batches(const Task& task, const ReplayBuffer& buffer, std::size_t batch_size,
                                    std::size_t count, Rng& rng) {
  auto current = last_task_batches(task, batch_size, count, rng);
  std::vector<Batch> out;
  for (const auto& b : current) out.push_back(balance(b, sample_buffer(buffer, batch_size, rng), rng));
  return out;
}

DriftReport run_drift_probe(const ExperimentConfig& config, const TaskStream& stream, Learner& learner,
                            std::uint64_t seed) {
  std::seed_seq seq{seed, std::uint64_t{3}};
  Rng rng(seq);
  const auto& last = stream.tasks.back();
  const auto count = static_cast<std::size_t>(config.probe.drift_batches);
  const auto k = config.strategy.batch_size;
  std::vector<Batch> tests;
  for (const auto& t : stream.tasks) tests.push_back(t.test);
  const auto classifier = classifier_for(config.strategy.method);
  const Batch* exemplars = classifier == Classifier::Ncm ? &learner.buffer.entries() : nullptr;

  DriftReport report;
  report.last_task = ema_drift_probe(learner.model, tests, last_task_batches(last, k, count, rng), classifier,
                                     exemplars);
  report.balanced = ema_drift_probe(learner.model, tests, balanced_batches(last, learner.buffer, k, count, rng),
                                    classifier, exemplars);
  return report;
}

SeedResult run_seed(const ExperimentConfig& config, const TaskStream& stream, std::uint64_t seed,
                    const SeedObserver& observer) {
  ModelConfig model_config = config.model;
  model_config.input_dim = stream.input_dim;
  model_config.num_classes = stream.num_classes;
  Learner learner(model_config, config.strategy, config.buffer_capacity, seed);
  const auto classifier = classifier_for(config.strategy.method);

  SeedResult result;
  result.seed = seed;
  result.accuracy = AccuracyMatrix(stream.num_tasks());
  for (std::size_t i = 0; i < stream.num_tasks(); ++i) {
    run_task(learner, stream.tasks[i], config.epochs);
    std::optional<ClassMeans> means;
    if (classifier == Classifier::Ncm) means = compute_class_means(learner.model, learner.buffer.entries());
    for (std::size_t j = 0; j <= i; ++j) {
      result.accuracy.set(i, j, evaluate_task(learner.model, stream.tasks[j].test, classifier,
                                              means ? &*means : nullptr));
    }
  }
  result.acc = acc_metric(result.accuracy);
  result.bwt = bwt_metric(result.accuracy);
  result.audit = learner.audit;
  result.optimizer_steps = learner.steps;
  if (config.probe.ema_drift) result.drift = run_drift_probe(config, stream, learner, seed);

  if (!config.output_dir.empty()) {
    const fs::path dir = resolve_output_dir(config.output_dir);
    fs::create_directories(dir);
    const auto tag = std::to_string(seed);
    if (config.probe.export_activations) {
      Batch all;
      for (const auto& t : stream.tasks) all.insert(all.end(), t.test.begin(), t.test.end());
      std::ofstream out(dir / ("activations_seed" + tag + ".csv"));
      write_activations_csv(export_activations(learner.model, all), out);
    }
    if (config.save_checkpoint) save_checkpoint(learner.model, learner.buffer, (dir / ("checkpoint_seed" + tag + ".txt")).string());
  }
  if (observer) observer(stream, learner, result);
  return result;
}

void aggregate(ResultRecord& record) {
  auto done = record.completed();
  record.succeeded = done.size();
  record.acc_mean = record.acc_std = 0.0;
  record.bwt_mean.reset();
  record.bwt_std.reset();
  if (done.empty()) return;
  // Sum in seed order so permuting the seed list cannot move the last bit.
  std::stable_sort(done.begin(), done.end(),
                   [](const SeedResult* a, const SeedResult* b) { return a->seed < b->seed; });
  const double n = static_cast<double>(done.size());
  double sum = 0.0;
  for (auto* s : done) sum += s->acc;
  record.acc_mean = sum / n;
  double ss = 0.0;
  for (auto* s : done) ss += (s->acc - record.acc_mean) * (s->acc - record.acc_mean);
  record.acc_std = done.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  if (done.front()->bwt) {
    double bsum = 0.0;
    for (auto* s : done) bsum += *s->bwt;
    const double bmean = bsum / n;
    double bss = 0.0;
    for (auto* s : done) bss += (*s->bwt - bmean) * (*s->bwt - bmean);
    record.bwt_mean = bmean;
    record.bwt_std = done.size() > 1 ? std::sqrt(bss / (n - 1.0)) : 0.0;
  }
}

ResultRecord run_experiment(const ExperimentConfig& config, const SeedObserver& observer) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  ResultRecord record;
  record.method = config.display_name();
  record.fingerprint = config_fingerprint(config);
  const TaskStream stream = build_stream(config);

  auto guarded = [&](std::uint64_t seed) {
    try {
      return run_seed(config, stream, seed, observer);
    } catch (const std::exception& e) {
      SeedResult failed;
      failed.seed = seed;
      failed.ok = false;
      failed.error = e.what();
      return failed;
    }
  };

  record.seeds.resize(config.seeds.size());
  if (config.jobs <= 1 || observer) {
    for (std::size_t i = 0; i < config.seeds.size(); ++i) record.seeds[i] = guarded(config.seeds[i]);
  } else {
    const std::size_t jobs = static_cast<std::size_t>(config.jobs);
    for (std::size_t begin = 0; begin < config.seeds.size(); begin += jobs) {
      std::vector<std::future<SeedResult>> running;
      const std::size_t end = std::min(config.seeds.size(), begin + jobs);
      for (std::size_t i = begin; i < end; ++i)
        running.push_back(std::async(std::launch::async, guarded, config.seeds[i]));
      for (std::size_t i = begin; i < end; ++i) record.seeds[i] = running[i - begin].get();
    }
  }
  aggregate(record);
  record.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!config.output_dir.empty()) persist(record, resolve_output_dir(config.output_dir));
  return record;
}

std::string resolve_output_dir(const std::string& dir) {
  const char* root = std::getenv("CLBENCH_OUT_DIR");
  if (!root || !*root) return dir;
  fs::path p(dir);
  if (p.is_absolute()) return dir;
  return (fs::path(root) / p).string();
}

void write_results_csv(const ResultRecord& record, std::ostream& out) {
  out << "seed,method,after_task,eval_task,accuracy\n";
  for (const auto* s : record.completed()) {
    const auto t = s->accuracy.num_tasks();
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        auto v = s->accuracy.get(i, j);
        if (!v) continue;
        out << s->seed << ',' << record.method << ',' << i + 1 << ',' << j + 1 << ',' << format_double(*v) << '\n';
      }
  }
}

std::vector<std::pair<std::uint64_t, AccuracyMatrix>> read_results_csv(std::istream& in) {
  std::string line;
  std::getline(in, line);
  if (line != "seed,method,after_task,eval_task,accuracy") throw ContractError("unexpected results.csv header");
  struct Cell {
    std::size_t i, j;
    double v;
  };
  std::vector<std::uint64_t> order;
  std::map<std::uint64_t, std::vector<Cell>> cells;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 5) throw ContractError("ragged results.csv row");
    auto seed = static_cast<std::uint64_t>(parse_int(f[0]));
    if (!cells.count(seed)) order.push_back(seed);
    cells[seed].push_back({static_cast<std::size_t>(parse_int(f[2])) - 1,
                           static_cast<std::size_t>(parse_int(f[3])) - 1, parse_double(f[4])});
  }
  std::vector<std::pair<std::uint64_t, AccuracyMatrix>> out;
  for (auto seed : order) {
    std::size_t t = 0;
    for (const auto& c : cells[seed]) t = std::max(t, c.i + 1);
    AccuracyMatrix r(t);
    for (const auto& c : cells[seed]) r.set(c.i, c.j, c.v);
    out.emplace_back(seed, std::move(r));
  }
  return out;
}

std::string summary_json(const ResultRecord& record) {
  nlohmann::ordered_json j;
  j["method"] = record.method;
  j["acc_mean"] = record.acc_mean;
  j["acc_std"] = record.acc_std;
  j["bwt_mean"] = record.bwt_mean ? nlohmann::ordered_json(*record.bwt_mean) : nlohmann::ordered_json(nullptr);
  j["bwt_std"] = record.bwt_std ? nlohmann::ordered_json(*record.bwt_std) : nlohmann::ordered_json(nullptr);
  auto seeds = nlohmann::ordered_json::array();
  for (const auto* s : record.completed()) seeds.push_back(s->seed);
  j["seeds"] = seeds;
  j["fingerprint"] = record.fingerprint;
  auto failures = nlohmann::ordered_json::array();
  for (const auto& s : record.seeds)
    if (!s.ok) failures.push_back({{"seed", s.seed}, {"error", s.error}});
  j["failed_seeds"] = failures;
  j["wall_clock_seconds"] = record.wall_clock_seconds;
  return j.dump(2) + "\n";
}

void persist(const ResultRecord& record, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "results.csv");
    write_results_csv(record, out);
  }
  {
    std::ofstream out(fs::path(dir) / "summary.json");
    out << summary_json(record);
  }
  bool any_drift = std::any_of(record.seeds.begin(), record.seeds.end(), [](const SeedResult& s) { return s.drift.has_value(); });
  if (any_drift) {
    std::ofstream out(fs::path(dir) / "drift.csv");
    out << "seed,source,task,acc_before,acc_after\n";
    for (const auto* s : record.completed()) {
      if (!s->drift) continue;
      for (const auto& [name, r] : {std::pair{"last_task", &s->drift->last_task}, std::pair{"balanced", &s->drift->balanced}})
        for (std::size_t t = 0; t < r->before.size(); ++t)
          out << s->seed << ',' << name << ',' << t + 1 << ',' << format_double(r->before[t]) << ','
              << format_double(r->after[t]) << '\n';
    }
  }
}

ComparisonTable compare_records(const std::vector<ResultRecord>& records, bool paired_seeds) {
  ComparisonTable table;
  for (const auto& r : records) table.rows.push_back({r.method, r.acc_mean, r.acc_std, r.bwt_mean, r.bwt_std});
  if (!paired_seeds || records.empty()) return table;

  auto seed_list = [](const ResultRecord& r) {
    std::vector<std::uint64_t> s;
    for (const auto& x : r.seeds) s.push_back(x.seed);
    return s;
  };
  const auto seeds = seed_list(records.front());
  for (const auto& r : records) {
    if (seed_list(r) != seeds) throw ConfigError("paired comparison needs identical seed lists");
  }
  const std::size_t n = records.size();
  table.win_rate.assign(n, std::vector<double>(n, 0.0));
  table.wins.assign(n, std::vector<std::size_t>(n, 0));
  std::size_t paired = 0;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    bool all_ok = std::all_of(records.begin(), records.end(), [&](const ResultRecord& r) { return r.seeds[s].ok; });
    if (!all_ok) continue;
    ++paired;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) {
        const double x = records[a].seeds[s].acc, y = records[b].seeds[s].acc;
        if (x > y) {
          table.win_rate[a][b] += 1.0;
          ++table.wins[a][b];
        } else if (x == y) {
          table.win_rate[a][b] += 0.5;
        }
      }
  }
  table.paired_seeds = paired;
  if (paired)
    for (auto& row : table.win_rate)
      for (auto& v : row) v /= static_cast<double>(paired);
  return table;
}

ComparisonTable compare_methods(const std::vector<ExperimentConfig>& configs, bool paired_seeds) {
  if (paired_seeds) {
    for (const auto& c : configs) {
      if (stream_fingerprint(c) != stream_fingerprint(configs.front()) || c.stream_csv != configs.front().stream_csv)
        throw ConfigError("paired comparison needs every config on the same stream");
      if (c.seeds != configs.front().seeds) throw ConfigError("paired comparison needs identical seed lists");
    }
  }
  std::vector<ResultRecord> records;
  for (const auto& c : configs) records.push_back(run_experiment(c));
  return compare_records(records, paired_seeds);
}

void write_comparison_csv(const ComparisonTable& table, std::ostream& out) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  out << "method,acc_mean,acc_std,bwt_mean,bwt_std\n";
  for (const auto& r : table.rows)
    out << r.method << ',' << format_double(r.acc_mean) << ',' << format_double(r.acc_std) << ',' << opt(r.bwt_mean)
        << ',' << opt(r.bwt_std) << '\n';
}

void write_win_matrix_csv(const ComparisonTable& table, std::ostream& out) {
  out << "method";
  for (const auto& r : table.rows) out << ',' << r.method;
  out << '\n';
  for (std::size_t a = 0; a < table.win_rate.size(); ++a) {
    out << table.rows[a].method;
    for (double v : table.win_rate[a]) out << ',' << format_double(v);
    out << '\n';
  }
}

}  // namespace clbench
