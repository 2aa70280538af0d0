#pragma once

#include <cstddef>
#include <vector>

#include "clbench/graph.hpp"
#include "clbench/tensor.hpp"

namespace clbench {

class MlpModel;

enum class StatsSource { BatchMoments, RunningEma };
enum class EmaUpdate { Update, Frozen };

/// Which moments normalize a BN forward pass and whether that pass moves
/// the running (EMA) statistics. Normalizing by the running statistics while
/// also updating them is rejected at construction.
class NormMode {
 public:
  constexpr NormMode(StatsSource source, EmaUpdate update) : source_(source), update_(update) {
    if (source == StatsSource::RunningEma && update == EmaUpdate::Update) {
      throw ContractError("NormMode(RunningEma, Update) is not a legal mode");
    }
  }

  // (BatchMoments, Update): conventional training forward.
  static constexpr NormMode train() { return {StatsSource::BatchMoments, EmaUpdate::Update}; }
  // (BatchMoments, Frozen): training forward that leaves the EMA alone.
  static constexpr NormMode frozen_batch() {
    return {StatsSource::BatchMoments, EmaUpdate::Frozen};
  }
  // (RunningEma, Frozen): inference.
  static constexpr NormMode inference() { return {StatsSource::RunningEma, EmaUpdate::Frozen}; }

  constexpr StatsSource source() const { return source_; }
  constexpr EmaUpdate update() const { return update_; }
  constexpr bool operator==(const NormMode&) const = default;

 private:
  StatsSource source_;
  EmaUpdate update_;
};

struct Moments {
  std::vector<double> mean;
  std::vector<double> var;  // biased: divides by the batch size
  bool operator==(const Moments&) const = default;
};

/// Per-feature BN parameters plus running statistics.
class BatchNormState {
 public:
  explicit BatchNormState(std::size_t features, double momentum = 0.9, double epsilon = 1e-5);

  std::size_t features() const { return running_.mean.size(); }
  double momentum() const { return momentum_; }
  double epsilon() const { return epsilon_; }

  Tensor& scale() { return scale_; }  // gamma, trainable
  Tensor& shift() { return shift_; }  // beta, trainable
  const Tensor& scale() const { return scale_; }
  const Tensor& shift() const { return shift_; }

  const Moments& running() const { return running_; }

  /// Moves the running moments towards the given batch moments:
  /// running <- momentum * running + (1 - momentum) * batch.
  void ema_update(const std::vector<double>& batch_mean, const std::vector<double>& batch_var);

  /// Restores running moments from a snapshot or checkpoint.
  void restore_running(Moments snapshot);

  BatchNormState clone() const;

 private:
  Tensor scale_;
  Tensor shift_;
  Moments running_;
  double momentum_;
  double epsilon_;
};

/// Per-feature mean and biased variance of a [B, C] tensor.
Moments batch_moments(const Tensor& x);

/// Free-function form of BatchNormState::ema_update.
void ema_update(BatchNormState& state, const std::vector<double>& batch_mean,
                const std::vector<double>& batch_var);

/// gamma * (x - mu) / sqrt(var + eps) + beta, with (mu, var) taken from the
/// batch or from the running statistics per `mode`. Running statistics are
/// constants for backward. With EmaUpdate::Update the running statistics
/// absorb this batch's moments after the output is computed.
Tensor bn_forward(Graph& g, const Tensor& x, BatchNormState& state, NormMode mode);

/// Forwards `batch` with (BatchMoments, Update) at every BN layer, records
/// nothing and leaves parameters untouched: only the EMA statistics move.
void ema_refresh_pass(MlpModel& model, const Tensor& batch);

}  // namespace clbench
