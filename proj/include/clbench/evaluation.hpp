#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

#include "clbench/data.hpp"
#include "clbench/model.hpp"

namespace clbench {

enum class Classifier { LinearHead, Ncm };

/// Per-class mean of L2-normalized head-input features.
struct ClassMeans {
  std::vector<int> labels;
  std::vector<std::vector<double>> means;

  bool empty() const { return labels.empty(); }
};

ClassMeans compute_class_means(MlpModel& model, const Batch& exemplars);

/// Predictions in inference mode (running statistics, nothing updated).
/// Each prediction depends on its own sample only.
std::vector<int> predict(MlpModel& model, const Batch& samples, Classifier classifier,
                         const ClassMeans* means = nullptr, std::size_t batch_size = 128);

/// Fraction of `test` predicted correctly.
double evaluate_task(MlpModel& model, const Batch& test, Classifier classifier,
                     const ClassMeans* means = nullptr, std::size_t batch_size = 128);

/// R[i][j]: accuracy on task j after training task i (both 0-based here).
class AccuracyMatrix {
 public:
  explicit AccuracyMatrix(std::size_t num_tasks);

  std::size_t num_tasks() const { return rows_.size(); }
  void set(std::size_t after_task, std::size_t eval_task, double accuracy);
  std::optional<double> get(std::size_t after_task, std::size_t eval_task) const;

  bool operator==(const AccuracyMatrix&) const = default;

 private:
  std::vector<std::vector<std::optional<double>>> rows_;
};

/// Mean of the last row.
double acc_metric(const AccuracyMatrix& r);

/// Mean over earlier tasks of R[T][t] - R[t][t]; absent when T = 1.
std::optional<double> bwt_metric(const AccuracyMatrix& r);

struct DriftResult {
  std::vector<double> before;  // per task
  std::vector<double> after;
};

/// Evaluates every test set, refreshes the EMA with each batch in turn,
/// evaluates again, then restores the running statistics. Parameters are
/// never touched. For NCM, class means are recomputed from `exemplars`
/// under each set of statistics.
DriftResult ema_drift_probe(MlpModel& model, const std::vector<Batch>& test_sets,
                            const std::vector<Batch>& refresh_batches, Classifier classifier,
                            const Batch* exemplars = nullptr);

struct ActivationRow {
  int label = 0;
  int prediction = 0;
  std::vector<double> features;
  bool operator==(const ActivationRow&) const = default;
};

/// Head-input features and linear-head predictions in inference mode.
std::vector<ActivationRow> export_activations(MlpModel& model, const Batch& samples);

/// Header `label,prediction,f0..f{d-1}`, values at 17 significant digits.
void write_activations_csv(const std::vector<ActivationRow>& rows, std::ostream& out);
std::vector<ActivationRow> read_activations_csv(std::istream& in);

}  // namespace clbench
