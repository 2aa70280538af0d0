#include "clbench/replay.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <string>

#include "clbench/csv.hpp"

namespace clbench {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("buffer capacity must be positive");
  entries_.reserve(capacity);
}

void ReplayBuffer::reservoir_offer(BufferEntry entry, Rng& rng) {
  if (entries_.size() < capacity_) {
    entries_.push_back(std::move(entry));
  } else {
    std::uniform_int_distribution<std::size_t> slot(0, seen_);
    const std::size_t j = slot(rng);
    if (j < capacity_) entries_[j] = std::move(entry);
  }
  ++seen_;
}

void ReplayBuffer::replace_contents(std::vector<BufferEntry> entries) {
  if (entries.size() > capacity_) throw ContractError("replacement exceeds buffer capacity");
  entries_ = std::move(entries);
}

void ReplayBuffer::restore(std::vector<BufferEntry> entries, std::size_t seen_count) {
  if (entries.size() > capacity_) throw ContractError("restored buffer exceeds capacity");
  entries_ = std::move(entries);
  seen_ = seen_count;
}

namespace {

Batch sample_from(const std::vector<const BufferEntry*>& pool, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t take = std::min(k, idx.size());
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  Batch out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(*pool[idx[i]]);
  return out;
}

}  // namespace

Batch sample_buffer(const ReplayBuffer& buffer, std::size_t k, Rng& rng) {
  std::vector<const BufferEntry*> pool;
  for (const auto& e : buffer.entries()) pool.push_back(&e);
  return sample_from(pool, k, rng);
}

Batch sample_prev_only(const ReplayBuffer& buffer, std::span<const int> current_classes,
                       std::size_t k, Rng& rng) {
  std::vector<const BufferEntry*> pool;
  for (const auto& e : buffer.entries()) {
    if (std::find(current_classes.begin(), current_classes.end(), e.label) == current_classes.end())
      pool.push_back(&e);
  }
  return sample_from(pool, k, rng);
}

Batch balance(const Batch& current, const Batch& buffer_batch, Rng& rng) {
  if (current.empty()) throw ContractError("balance() needs a non-empty current batch");
  if (buffer_batch.empty()) return current;

  std::map<int, std::size_t> buffer_counts;
  for (const auto& e : buffer_batch) ++buffer_counts[e.label];
  const std::size_t target =
      (buffer_batch.size() + buffer_counts.size() - 1) / buffer_counts.size();

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < current.size(); ++i) by_class[current[i].label].push_back(i);

  Batch out = buffer_batch;
  for (auto& [label, indices] : by_class) {
    const std::size_t have = buffer_counts.count(label) ? buffer_counts[label] : 0;
    if (have >= target) continue;
    const std::size_t take = std::min(target - have, indices.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, indices.size() - 1);
      std::swap(indices[i], indices[pick(rng)]);
      out.push_back(current[indices[i]]);
    }
  }
  return out;
}

constexpr double kTieTolerance = 1e-12;

std::vector<std::size_t> herding_select(const std::vector<std::vector<double>>& features,
                                        std::size_t m) {
  const std::size_t n = features.size();
  if (m == 0 || m > n) {
    throw ContractError("herding_select needs 1 <= m <= n, got m=" + std::to_string(m) +
                        " n=" + std::to_string(n));
  }
  const std::size_t dim = features.front().size();
  std::vector<double> target(dim, 0.0);
  for (const auto& f : features) {
    if (f.size() != dim) throw DimensionError("herding_select: ragged feature rows");
    for (std::size_t d = 0; d < dim; ++d) target[d] += f[d];
  }
  for (auto& v : target) v /= static_cast<double>(n);

  std::vector<double> running(dim, 0.0);
  std::vector<char> taken(n, 0);
  std::vector<std::size_t> order;
  order.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double count = static_cast<double>(k + 1);
    std::size_t best = n;
    double best_dist = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      double dist = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = target[d] - (running[d] + features[i][d]) / count;
        dist += diff * diff;
      }
      // Distances equal up to rounding are ties; the earlier index keeps them.
      if (best == n || dist < best_dist * (1.0 - kTieTolerance)) {
        best = i;
        best_dist = dist;
      }
    }
    taken[best] = 1;
    order.push_back(best);
    for (std::size_t d = 0; d < dim; ++d) running[d] += features[best][d];
  }
  return order;
}

void icarl_rebuild_buffer(MlpModel& model, const Batch& task_data, ReplayBuffer& buffer,
                          std::size_t capacity) {
  // Stored classes in buffer order (each class is a contiguous herding-ordered run).
  std::vector<int> old_classes;
  std::map<int, std::vector<BufferEntry>> old_entries;
  for (const auto& e : buffer.entries()) {
    if (!old_entries.count(e.label)) old_classes.push_back(e.label);
    old_entries[e.label].push_back(e);
  }
  std::map<int, std::vector<std::size_t>> new_classes;
  for (std::size_t i = 0; i < task_data.size(); ++i) {
    if (!old_entries.count(task_data[i].label)) new_classes[task_data[i].label].push_back(i);
  }
  const std::size_t classes_seen = old_classes.size() + new_classes.size();
  if (classes_seen == 0) return;
  const std::size_t quota = capacity / classes_seen;
  if (quota == 0) {
    throw ContractError("buffer capacity " + std::to_string(capacity) + " is below the " +
                        std::to_string(classes_seen) + " classes seen");
  }

  std::vector<BufferEntry> rebuilt;
  for (int label : old_classes) {
    auto& entries = old_entries[label];
    const std::size_t keep = std::min(quota, entries.size());
    rebuilt.insert(rebuilt.end(), entries.begin(), entries.begin() + static_cast<long>(keep));
  }
  for (const auto& [label, indices] : new_classes) {
    Batch samples;
    for (auto i : indices) samples.push_back(task_data[i]);
    auto features = embed(model, samples);
    auto picks = herding_select(features, std::min(quota, samples.size()));
    for (auto p : picks) rebuilt.push_back(samples[p]);
  }
  buffer.replace_contents(std::move(rebuilt));
}

void write_buffer_csv(const ReplayBuffer& buffer, std::size_t num_classes, std::ostream& out) {
  const std::size_t dim = buffer.empty() ? 0 : buffer.entries().front().input.size();
  out << "task_id,label";
  for (std::size_t d = 0; d < dim; ++d) out << ",x_" << d;
  for (std::size_t c = 0; c < num_classes; ++c) out << ",logit_" << c;
  out << '\n';
  for (const auto& e : buffer.entries()) {
    out << e.task_id << ',' << e.label;
    for (double v : e.input) out << ',' << format_double(v);
    for (std::size_t c = 0; c < num_classes; ++c) {
      out << ',';
      if (e.logits && c < e.logits->size()) out << format_double((*e.logits)[c]);
    }
    out << '\n';
  }
}

}  // namespace clbench
