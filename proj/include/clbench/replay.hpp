#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "clbench/data.hpp"
#include "clbench/model.hpp"

namespace clbench {

/// Fixed-capacity exemplar store. Entries change through reservoir_offer
/// (online methods) or replace_contents (herding rebuilds).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t seen_count() const { return seen_; }
  const std::vector<BufferEntry>& entries() const { return entries_; }

  /// Reservoir sampling: append while not full, otherwise replace a uniform
  /// slot with probability capacity / (seen + 1). Always counts the offer.
  void reservoir_offer(BufferEntry entry, Rng& rng);

  void replace_contents(std::vector<BufferEntry> entries);

  /// Restores a saved buffer (checkpoint loading).
  void restore(std::vector<BufferEntry> entries, std::size_t seen_count);

 private:
  std::size_t capacity_;
  std::size_t seen_ = 0;
  std::vector<BufferEntry> entries_;
};

inline void reservoir_offer(ReplayBuffer& buffer, BufferEntry entry, Rng& rng) {
  buffer.reservoir_offer(std::move(entry), rng);
}

/// Up to k entries uniformly without replacement, in random order. An empty
/// buffer yields an empty batch.
Batch sample_buffer(const ReplayBuffer& buffer, std::size_t k, Rng& rng);

/// Like sample_buffer, restricted to entries whose label is not a current
/// class.
Batch sample_prev_only(const ReplayBuffer& buffer, std::span<const int> current_classes,
                       std::size_t k, Rng& rng);

/// Balanced batch: the buffer batch plus, for every class present in
/// `current`, enough of its `current` samples (drawn without replacement) to
/// bring that class up to ceil(|buffer_batch| / #classes in buffer_batch).
/// Classes already at or above the target get nothing. With an empty
/// buffer batch the result is `current`.
Batch balance(const Batch& current, const Batch& buffer_batch, Rng& rng);

/// Greedy herding: repeatedly picks the unselected row whose addition keeps
/// the mean of the selection closest (L2) to the mean of all rows. Ties go
/// to the lowest index. Returns the first m picks in order.
std::vector<std::size_t> herding_select(const std::vector<std::vector<double>>& features,
                                        std::size_t m);

/// Herding rebuild after a task. With q = capacity / classes_seen, every
/// stored class keeps its first q exemplars and each new class in
/// `task_data` contributes q herding picks over its normalized features.
void icarl_rebuild_buffer(MlpModel& model, const Batch& task_data, ReplayBuffer& buffer,
                          std::size_t capacity);

/// Debug dump, header `task_id,label,x_0..x_{D-1},logit_0..logit_{C-1}`.
/// Logit cells are empty for entries without stored logits.
void write_buffer_csv(const ReplayBuffer& buffer, std::size_t num_classes, std::ostream& out);

}  // namespace clbench
