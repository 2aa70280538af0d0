#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "clbench/data.hpp"
#include "clbench/graph.hpp"
#include "clbench/normalization.hpp"
#include "clbench/tensor.hpp"

namespace clbench {

using Rng = std::mt19937_64;

struct ModelConfig {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t num_classes = 10;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;

  bool operator==(const ModelConfig&) const = default;
};

struct LinearLayer {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

/// Linear -> BN -> ReLU blocks followed by a linear head spanning every
/// class of the stream. The head never grows.
class MlpModel {
 public:
  struct Output {
    Tensor logits;    // [B, num_classes]
    Tensor features;  // head input, [B, feature_dim]
  };

  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  MlpModel(const ModelConfig& config, Rng& rng);

  Output forward(Graph& g, const Tensor& x, NormMode mode);

  std::vector<Tensor> parameters() const;
  std::vector<BatchNormState>& norms() { return norms_; }
  const std::vector<BatchNormState>& norms() const { return norms_; }
  std::vector<LinearLayer>& linears() { return linears_; }
  const std::vector<LinearLayer>& linears() const { return linears_; }

  const ModelConfig& config() const { return config_; }
  std::size_t num_classes() const { return config_.num_classes; }
  std::size_t feature_dim() const;

  /// Deep copy: parameters and running statistics are not shared.
  MlpModel clone() const;

  std::vector<double> flat_parameters() const;
  std::vector<Moments> running_stats() const;
  void restore_running_stats(const std::vector<Moments>& stats);

 private:
  MlpModel() = default;

  ModelConfig config_;
  std::vector<LinearLayer> linears_;  // hidden layers then the head
  std::vector<BatchNormState> norms_;
};

/// L2-normalized head-input features of every sample, inference mode.
std::vector<std::vector<double>> embed(MlpModel& model, const Batch& batch,
                                       std::size_t chunk = 128);

/// p <- p - lr * (grad + 2 * weight_decay * p), then zero the gradients.
void sgd_step(std::span<Tensor> params, double lr, double weight_decay = 0.0);
void zero_grads(std::span<Tensor> params);

}  // namespace clbench
