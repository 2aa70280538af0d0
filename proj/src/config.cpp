#include "clbench/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "clbench/csv.hpp"

namespace clbench {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

double to_double(std::string_view key, std::string_view v) {
  try {
    return parse_double(v);
  } catch (const std::invalid_argument&) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
  }
}

long long to_int(std::string_view key, std::string_view v) {
  try {
    return parse_int(v);
  } catch (const std::invalid_argument&) {
    throw ConfigError(std::string(key) + ": expected an integer, got '" + std::string(v) + "'");
  }
}

std::size_t to_count(std::string_view key, std::string_view v) {
  auto n = to_int(key, v);
  if (n < 0) throw ConfigError(std::string(key) + " must be >= 0");
  return static_cast<std::size_t>(n);
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(std::string(key) + ": expected true/false, got '" + std::string(v) + "'");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

template <class T>
std::string join(const std::vector<T>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(items[i]);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  bool affects_results = true;
};

#define CLB_DOUBLE(KEY, MEMBER)                                                       \
  Field {                                                                             \
    KEY, [](const ExperimentConfig& c) { return format_double(c.MEMBER); },           \
        [](ExperimentConfig& c, std::string_view v) { c.MEMBER = to_double(KEY, v); } \
  }
#define CLB_INT(KEY, MEMBER, TYPE)                                                   \
  Field {                                                                            \
    KEY, [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); },         \
        [](ExperimentConfig& c, std::string_view v) {                                \
          c.MEMBER = static_cast<TYPE>(to_int(KEY, v));                              \
        }                                                                            \
  }
#define CLB_COUNT(KEY, MEMBER)                                                          \
  Field {                                                                               \
    KEY, [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); },            \
        [](ExperimentConfig& c, std::string_view v) { c.MEMBER = to_count(KEY, v); }    \
  }
#define CLB_BOOL(KEY, MEMBER)                                                        \
  Field {                                                                            \
    KEY, [](const ExperimentConfig& c) { return from_bool(c.MEMBER); },              \
        [](ExperimentConfig& c, std::string_view v) { c.MEMBER = to_bool(KEY, v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      CLB_INT("stream.num_tasks", stream.num_tasks, int),
      CLB_INT("stream.classes_per_task", stream.classes_per_task, int),
      CLB_COUNT("stream.input_dim", stream.input_dim),
      CLB_INT("stream.train_per_class", stream.train_per_class, int),
      CLB_INT("stream.test_per_class", stream.test_per_class, int),
      CLB_DOUBLE("stream.mean_spread", stream.mean_spread),
      CLB_DOUBLE("stream.task_spread", stream.task_spread),
      CLB_DOUBLE("stream.within_class_scale", stream.within_class_scale),
      CLB_DOUBLE("stream.overlap", stream.overlap),
      CLB_INT("stream.seed", stream.seed, std::uint64_t),
      Field{"stream.csv", [](const ExperimentConfig& c) { return c.stream_csv; },
            [](ExperimentConfig& c, std::string_view v) { c.stream_csv = std::string(v); }},
      Field{"model.hidden", [](const ExperimentConfig& c) { return join(c.model.hidden); },
            [](ExperimentConfig& c, std::string_view v) {
              c.model.hidden.clear();
              if (v.empty()) return;
              for (const auto& part : split_csv_line(v)) c.model.hidden.push_back(to_count("model.hidden", trim(part)));
            }},
      CLB_DOUBLE("model.bn_momentum", model.bn_momentum),
      CLB_DOUBLE("model.bn_epsilon", model.bn_epsilon),
      Field{"strategy.method",
            [](const ExperimentConfig& c) { return std::string(method_name(c.strategy.method)); },
            [](ExperimentConfig& c, std::string_view v) { c.strategy.method = parse_method(v); }},
      CLB_DOUBLE("strategy.lr", strategy.lr),
      CLB_COUNT("strategy.batch_size", strategy.batch_size),
      CLB_COUNT("strategy.buffer_batch_size", strategy.buffer_batch_size),
      CLB_DOUBLE("strategy.derpp_alpha", strategy.derpp_alpha),
      CLB_DOUBLE("strategy.derpp_beta", strategy.derpp_beta),
      CLB_DOUBLE("strategy.icarl_weight_decay", strategy.icarl_weight_decay),
      Field{"strategy.bnt_param_stats",
            [](const ExperimentConfig& c) {
              return std::string(c.strategy.bnt_param_stats == BntParamStats::BatchMoments ? "batch" : "running");
            },
            [](ExperimentConfig& c, std::string_view v) {
              if (v == "batch") c.strategy.bnt_param_stats = BntParamStats::BatchMoments;
              else if (v == "running") c.strategy.bnt_param_stats = BntParamStats::RunningEma;
              else throw ConfigError("strategy.bnt_param_stats must be batch or running");
            }},
      CLB_BOOL("strategy.icarl_bnt_double_update", strategy.icarl_bnt_double_update),
      CLB_COUNT("buffer.capacity", buffer_capacity),
      CLB_INT("train.epochs", epochs, int),
      Field{"run.seeds", [](const ExperimentConfig& c) { return join(c.seeds); },
            [](ExperimentConfig& c, std::string_view v) { c.seeds = parse_seed_list(v); }},
      Field{"run.name", [](const ExperimentConfig& c) { return c.name; },
            [](ExperimentConfig& c, std::string_view v) { c.name = std::string(v); }},
      Field{"run.output_dir", [](const ExperimentConfig& c) { return c.output_dir; },
            [](ExperimentConfig& c, std::string_view v) { c.output_dir = std::string(v); }, false},
      Field{"run.jobs", [](const ExperimentConfig& c) { return std::to_string(c.jobs); },
            [](ExperimentConfig& c, std::string_view v) { c.jobs = static_cast<int>(to_int("run.jobs", v)); },
            false},
      CLB_BOOL("run.save_checkpoint", save_checkpoint),
      CLB_BOOL("probe.ema_drift", probe.ema_drift),
      CLB_INT("probe.drift_batches", probe.drift_batches, int),
      CLB_BOOL("probe.export_activations", probe.export_activations),
  };
  return table;
}

#undef CLB_DOUBLE
#undef CLB_INT
#undef CLB_COUNT
#undef CLB_BOOL

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string ExperimentConfig::display_name() const {
  return name.empty() ? std::string(method_name(strategy.method)) : name;
}

void ExperimentConfig::validate() const {
  if (stream_csv.empty()) stream.validate();
  if (seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
  if (epochs <= 0) throw ConfigError("train.epochs must be positive");
  if (buffer_capacity == 0) throw ConfigError("buffer.capacity must be positive");
  if (strategy.batch_size == 0) throw ConfigError("strategy.batch_size must be positive");
  if (!(strategy.lr > 0.0)) throw ConfigError("strategy.lr must be positive");
  if (jobs <= 0) throw ConfigError("run.jobs must be positive");
  if (probe.drift_batches < 0) throw ConfigError("probe.drift_batches must be >= 0");
  if (!(model.bn_momentum > 0.0 && model.bn_momentum < 1.0)) throw ConfigError("model.bn_momentum must lie in (0,1)");
  if (!(model.bn_epsilon > 0.0)) throw ConfigError("model.bn_epsilon must be positive");
  if (is_icarl_family(strategy.method) && stream_csv.empty()) {
    const auto classes = static_cast<std::size_t>(stream.num_tasks * stream.classes_per_task);
    if (buffer_capacity < classes) {
      throw ConfigError("buffer.capacity " + std::to_string(buffer_capacity) + " leaves no exemplar for some of the " +
                        std::to_string(classes) + " classes");
    }
  }
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : split_csv_line(text)) {
    auto t = trim(part);
    if (t.empty()) continue;
    auto v = to_int("run.seeds", t);
    if (v < 0) throw ConfigError("seeds must be non-negative");
    seeds.push_back(static_cast<std::uint64_t>(v));
  }
  if (seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
  return seeds;
}

void apply_override(ExperimentConfig& config, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(config, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto stripped = trim(line);
    if (stripped.empty()) continue;
    auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      apply_override(config, trim(std::string_view(stripped).substr(0, eq)),
                     trim(std::string_view(stripped).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

std::string config_fingerprint(const ExperimentConfig& config) {
  std::string canonical;
  for (const auto& f : fields())
    if (f.affects_results) canonical += f.key + " = " + f.get(config) + "\n";
  return hex64(fnv1a(canonical));
}

std::string stream_fingerprint(const ExperimentConfig& config) {
  std::string canonical;
  for (const auto& f : fields())
    if (f.key.rfind("stream.", 0) == 0) canonical += f.key + " = " + f.get(config) + "\n";
  return hex64(fnv1a(canonical));
}

}  // namespace clbench
