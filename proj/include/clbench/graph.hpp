#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "clbench/tensor.hpp"

namespace clbench {

/// Tape of the operations applied during one forward pass.
///
/// Ops append a record holding a closure that pushes the output gradient
/// into the gradients of their inputs. backward() walks the tape once in
/// reverse. A graph constructed with Recording::Off evaluates ops without
/// recording anything (inference, EMA refresh passes).
class Graph {
 public:
  enum class Recording { On, Off };

  explicit Graph(Recording recording = Recording::On);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  static Graph no_grad() { return Graph(Recording::Off); }

  bool recording() const { return recording_ == Recording::On; }
  std::size_t size() const { return records_.size(); }

  // True when `output` should be recorded given the inputs' grad flags.
  bool tracks(std::initializer_list<const Tensor*> inputs) const;
  void record(Tensor output, std::function<void()> backward);

  /// Populates the gradient of every leaf reachable from `loss`. Leaf
  /// gradients accumulate across calls; intermediate gradients are reset.
  void backward(const Tensor& loss);

 private:
  struct Record {
    Tensor output;
    std::function<void()> backward;
  };
  Recording recording_;
  std::vector<Record> records_;
};

// Affine map: out[b] = x[b] * weight + bias, weight is [in, out].
Tensor linear(Graph& g, const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor relu(Graph& g, const Tensor& x);
Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& a, double factor);
Tensor sum(Graph& g, const Tensor& a);
Tensor mean(Graph& g, const Tensor& a);

/// Mean softmax cross-entropy over the batch.
Tensor softmax_ce_loss(Graph& g, const Tensor& logits, std::span<const int> labels);

/// sum_i weights[i] * CE_i. softmax_ce_loss is this with weights 1/B.
Tensor weighted_softmax_ce_loss(Graph& g, const Tensor& logits,
                                std::span<const int> labels,
                                std::span<const double> weights);

/// Mean squared difference between logits and constant stored logits.
Tensor logit_mse_loss(Graph& g, const Tensor& current, const Tensor& stored);

/// Mean binary cross-entropy on sigmoid(logits). When `column_mask` is
/// non-empty only columns with a nonzero mask contribute, and the mean runs
/// over rows x active columns.
Tensor sigmoid_bce_loss(Graph& g, const Tensor& logits, const Tensor& targets,
                        std::span<const std::uint8_t> column_mask = {});

double sigmoid(double z);

}  // namespace clbench
