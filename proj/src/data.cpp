#include "clbench/data.hpp"

#include <string>

namespace clbench {

Tensor inputs_tensor(const Batch& batch) {
  if (batch.empty()) return Tensor::zeros({0, 0});
  const std::size_t dim = batch.front().input.size();
  std::vector<double> values;
  values.reserve(batch.size() * dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].input.size() != dim) {
      throw DimensionError("batch row " + std::to_string(i) + " has " +
                           std::to_string(batch[i].input.size()) + " features, expected " +
                           std::to_string(dim));
    }
    values.insert(values.end(), batch[i].input.begin(), batch[i].input.end());
  }
  return Tensor({batch.size(), dim}, std::move(values));
}

std::vector<int> labels_of(const Batch& batch) {
  std::vector<int> labels;
  labels.reserve(batch.size());
  for (const auto& e : batch) labels.push_back(e.label);
  return labels;
}

Tensor stored_logits_tensor(const Batch& batch, std::size_t num_classes) {
  std::vector<double> values;
  values.reserve(batch.size() * num_classes);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch[i].logits) {
      throw ContractError("buffer entry " + std::to_string(i) + " (label " +
                          std::to_string(batch[i].label) + ", task " +
                          std::to_string(batch[i].task_id) + ") carries no stored logits");
    }
    if (batch[i].logits->size() != num_classes) {
      throw DimensionError("buffer entry " + std::to_string(i) + " stores " +
                           std::to_string(batch[i].logits->size()) + " logits, head has " +
                           std::to_string(num_classes));
    }
    values.insert(values.end(), batch[i].logits->begin(), batch[i].logits->end());
  }
  return Tensor({batch.size(), num_classes}, std::move(values));
}

Batch concat(const Batch& a, const Batch& b) {
  Batch out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace clbench
