#include "clbench/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "clbench/csv.hpp"

namespace clbench {

void StreamConfig::validate() const {
  if (num_tasks <= 0 || classes_per_task <= 0 || input_dim == 0 || train_per_class <= 0 ||
      test_per_class <= 0) {
    throw ConfigError("stream counts must all be positive");
  }
  if (overlap < 0.0) throw ConfigError("stream.overlap must be >= 0");
  if (mean_spread < 0.0 || task_spread < 0.0) throw ConfigError("stream spreads must be >= 0");
  if (!(within_class_scale > 0.0)) throw ConfigError("stream.within_class_scale must be > 0");
  if (mean_spread == 0.0 && task_spread == 0.0 && overlap > 0.0) {
    throw ConfigError("degenerate geometry: zero mean spread with overlap requested");
  }
}

void TaskStream::validate() const {
  std::set<int> seen;
  for (const auto& task : tasks) {
    for (int c : task.classes) {
      if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
        throw ConfigError("class " + std::to_string(c) + " outside the head of " +
                          std::to_string(num_classes));
      }
      if (!seen.insert(c).second) {
        throw ConfigError("class " + std::to_string(c) + " appears in more than one task");
      }
    }
    for (const Batch* split : {&task.train, &task.test}) {
      for (const auto& e : *split) {
        if (e.input.size() != input_dim) throw ConfigError("sample with wrong input dimension");
        if (std::find(task.classes.begin(), task.classes.end(), e.label) == task.classes.end()) {
          throw ConfigError("label " + std::to_string(e.label) + " not in the class set of task " +
                            std::to_string(task.id));
        }
      }
    }
  }
}

TaskStream make_gaussian_stream(const StreamConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t dim = config.input_dim;

  TaskStream stream;
  stream.input_dim = dim;
  stream.num_classes = static_cast<std::size_t>(config.num_tasks * config.classes_per_task);

  std::vector<std::vector<double>> means;
  for (int t = 0; t < config.num_tasks; ++t) {
    std::vector<double> task_offset(dim);
    for (auto& v : task_offset) v = config.task_spread * normal(rng);
    for (int k = 0; k < config.classes_per_task; ++k) {
      std::vector<double> mean(dim);
      for (std::size_t d = 0; d < dim; ++d) mean[d] = task_offset[d] + config.mean_spread * normal(rng);
      if (t > 0 && config.overlap > 0.0) {
        const std::size_t previous = static_cast<std::size_t>(t * config.classes_per_task);
        const auto& anchor = means[std::uniform_int_distribution<std::size_t>(0, previous - 1)(rng)];
        for (std::size_t d = 0; d < dim; ++d)
          mean[d] = (1.0 - config.overlap) * mean[d] + config.overlap * anchor[d];
      }
      means.push_back(std::move(mean));
    }
  }

  auto draw = [&](int label, int task_id) {
    Example e;
    e.label = label;
    e.task_id = task_id;
    e.input.resize(dim);
    for (std::size_t d = 0; d < dim; ++d)
      e.input[d] = means[label][d] + config.within_class_scale * normal(rng);
    return e;
  };

  for (int t = 0; t < config.num_tasks; ++t) {
    Task task;
    task.id = t;
    for (int k = 0; k < config.classes_per_task; ++k) task.classes.push_back(t * config.classes_per_task + k);
    for (int c : task.classes) {
      for (int i = 0; i < config.train_per_class; ++i) task.train.push_back(draw(c, t));
      for (int i = 0; i < config.test_per_class; ++i) task.test.push_back(draw(c, t));
    }
    stream.tasks.push_back(std::move(task));
  }
  stream.validate();
  return stream;
}

namespace {

std::vector<Batch> chunk(const Batch& pool, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ContractError("batch size must be >= 1");
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    const std::size_t end = std::min(order.size(), start + batch_size);
    for (std::size_t i = start; i < end; ++i) b.push_back(pool[order[i]]);
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace

std::vector<Batch> iterate_online(const Batch& data, std::size_t batch_size, Rng& rng) {
  return chunk(data, batch_size, rng);
}

std::vector<Batch> iterate_offline_mixed(const Batch& data, const Batch& buffer,
                                         std::size_t batch_size, Rng& rng) {
  if (buffer.empty()) return chunk(data, batch_size, rng);
  return chunk(concat(data, buffer), batch_size, rng);
}

void write_stream_csv(const TaskStream& stream, std::ostream& out) {
  out << "split,task_id,label";
  for (std::size_t d = 0; d < stream.input_dim; ++d) out << ",x_" << d;
  out << '\n';
  for (const auto& task : stream.tasks) {
    for (const auto& [name, split] : {std::pair{"train", &task.train}, std::pair{"test", &task.test}}) {
      for (const auto& e : *split) {
        out << name << ',' << task.id << ',' << e.label;
        for (double v : e.input) out << ',' << format_double(v);
        out << '\n';
      }
    }
  }
}

void write_stream_csv(const TaskStream& stream, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write stream CSV to " + path);
  write_stream_csv(stream, out);
}

TaskStream read_stream_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("stream CSV is empty");
  auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "split" || header[1] != "task_id" || header[2] != "label") {
    throw ConfigError("stream CSV header must start with split,task_id,label,x_0");
  }
  const std::size_t dim = header.size() - 3;
  std::map<int, Task> tasks;
  int max_label = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ConfigError("stream CSV line " + std::to_string(line_no) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(header.size()));
    }
    try {
      Example e;
      e.task_id = static_cast<int>(parse_int(fields[1]));
      e.label = static_cast<int>(parse_int(fields[2]));
      if (e.label < 0 || e.task_id < 0) throw ConfigError("negative label or task id");
      e.input.reserve(dim);
      for (std::size_t d = 0; d < dim; ++d) e.input.push_back(parse_double(fields[3 + d]));
      auto& task = tasks[e.task_id];
      task.id = e.task_id;
      if (std::find(task.classes.begin(), task.classes.end(), e.label) == task.classes.end())
        task.classes.push_back(e.label);
      max_label = std::max(max_label, e.label);
      if (fields[0] == "train") {
        task.train.push_back(std::move(e));
      } else if (fields[0] == "test") {
        task.test.push_back(std::move(e));
      } else {
        throw ConfigError("unknown split '" + fields[0] + "'");
      }
    } catch (const std::invalid_argument& err) {
      throw ConfigError("stream CSV line " + std::to_string(line_no) + ": " + err.what());
    }
  }
  TaskStream stream;
  stream.input_dim = dim;
  stream.num_classes = static_cast<std::size_t>(max_label + 1);
  int position = 0;
  for (auto& [id, task] : tasks) {
    std::sort(task.classes.begin(), task.classes.end());
    // Renumber to 0-based positions; the CSV may skip ids.
    task.id = position;
    for (auto& e : task.train) e.task_id = position;
    for (auto& e : task.test) e.task_id = position;
    ++position;
    stream.tasks.push_back(std::move(task));
  }
  if (stream.tasks.empty()) throw ConfigError("stream CSV holds no samples");
  stream.validate();
  return stream;
}

TaskStream read_stream_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open stream CSV " + path);
  return read_stream_csv(in);
}

}  // namespace clbench
