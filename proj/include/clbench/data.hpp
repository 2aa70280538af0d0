#pragma once

#include <optional>
#include <vector>

#include "clbench/tensor.hpp"

namespace clbench {

/// One labeled sample. `logits` is only filled for buffer entries of
/// methods that distill from stored outputs.
struct Example {
  std::vector<double> input;
  int label = 0;
  int task_id = 0;
  std::optional<std::vector<double>> logits;

  bool operator==(const Example&) const = default;
};

using Batch = std::vector<Example>;
using BufferEntry = Example;

Tensor inputs_tensor(const Batch& batch);
std::vector<int> labels_of(const Batch& batch);

/// Stored logits of every entry as a [B, C] tensor; throws ContractError
/// naming the first entry without logits.
Tensor stored_logits_tensor(const Batch& batch, std::size_t num_classes);

Batch concat(const Batch& a, const Batch& b);

}  // namespace clbench
