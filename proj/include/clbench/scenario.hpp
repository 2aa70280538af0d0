#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "clbench/data.hpp"
#include "clbench/model.hpp"

namespace clbench {

/// Synthetic Class-IL benchmark: every class is an isotropic Gaussian blob.
///
/// Class means are `task_offset + class_offset`. `task_offset` is shared by
/// the classes of one task (scale `task_spread`) so that different tasks
/// produce different feature statistics; `class_offset` has scale
/// `mean_spread`. With `overlap` > 0 each class mean after the first task is
/// pulled towards a randomly chosen earlier class mean:
/// mean = (1 - overlap) * fresh + overlap * anchor.
struct StreamConfig {
  int num_tasks = 5;
  int classes_per_task = 2;
  std::size_t input_dim = 32;
  int train_per_class = 200;
  int test_per_class = 100;
  double mean_spread = 1.0;
  double task_spread = 1.0;
  double within_class_scale = 1.0;
  double overlap = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const StreamConfig&) const = default;
  void validate() const;
};

struct Task {
  int id = 0;  // 0-based position in the stream
  std::vector<int> classes;
  Batch train;
  Batch test;
};

/// Ordered tasks over disjoint class sets. Immutable once built.
struct TaskStream {
  std::vector<Task> tasks;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;

  std::size_t num_tasks() const { return tasks.size(); }
  /// Throws ConfigError if two tasks share a class or a sample is
  /// malformed.
  void validate() const;
};

TaskStream make_gaussian_stream(const StreamConfig& config);

/// One shuffled pass over `data` in batches of `batch_size`; the final
/// short batch is kept.
std::vector<Batch> iterate_online(const Batch& data, std::size_t batch_size, Rng& rng);

/// One shuffled pass over `data` united with the buffer contents.
std::vector<Batch> iterate_offline_mixed(const Batch& data, const Batch& buffer,
                                         std::size_t batch_size, Rng& rng);

/// CSV with header `split,task_id,label,x_0..x_{D-1}`; task ids are 0-based.
void write_stream_csv(const TaskStream& stream, std::ostream& out);
void write_stream_csv(const TaskStream& stream, const std::string& path);
TaskStream read_stream_csv(std::istream& in);
TaskStream read_stream_csv(const std::string& path);

}  // namespace clbench
