#include "clbench/evaluation.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <string>

#include "clbench/csv.hpp"

namespace clbench {

ClassMeans compute_class_means(MlpModel& model, const Batch& exemplars) {
  auto features = embed(model, exemplars);
  std::map<int, std::pair<std::vector<double>, std::size_t>> acc;
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    auto& [sum, count] = acc[exemplars[i].label];
    if (sum.empty()) sum.assign(features[i].size(), 0.0);
    for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += features[i][d];
    ++count;
  }
  ClassMeans out;
  for (auto& [label, entry] : acc) {
    auto& [sum, count] = entry;
    for (auto& v : sum) v /= static_cast<double>(count);
    out.labels.push_back(label);
    out.means.push_back(std::move(sum));
  }
  return out;
}

std::vector<int> predict(MlpModel& model, const Batch& samples, Classifier classifier,
                         const ClassMeans* means, std::size_t batch_size) {
  std::vector<int> preds;
  preds.reserve(samples.size());
  if (classifier == Classifier::Ncm) {
    if (!means || means->empty()) throw ContractError("NCM inference requested without class means");
    for (const auto& f : embed(model, samples, batch_size)) {
      std::size_t best = 0;
      double best_dist = 0.0;
      for (std::size_t k = 0; k < means->means.size(); ++k) {
        double dist = 0.0;
        for (std::size_t d = 0; d < f.size(); ++d) {
          const double diff = f[d] - means->means[k][d];
          dist += diff * diff;
        }
        if (k == 0 || dist < best_dist) {
          best = k;
          best_dist = dist;
        }
      }
      preds.push_back(means->labels[best]);
    }
    return preds;
  }
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const auto end = std::min(samples.size(), start + batch_size);
    Batch part(samples.begin() + static_cast<long>(start), samples.begin() + static_cast<long>(end));
    Graph g(Graph::Recording::Off);
    auto logits = model.forward(g, inputs_tensor(part), NormMode::inference()).logits;
    const std::size_t classes = logits.cols();
    auto z = logits.values();
    for (std::size_t b = 0; b < part.size(); ++b) {
      auto row = z.subspan(b * classes, classes);
      preds.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return preds;
}

double evaluate_task(MlpModel& model, const Batch& test, Classifier classifier,
                     const ClassMeans* means, std::size_t batch_size) {
  if (test.empty()) throw ContractError("evaluate_task on an empty test set");
  auto preds = predict(model, test, classifier, means, batch_size);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) correct += preds[i] == test[i].label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

AccuracyMatrix::AccuracyMatrix(std::size_t num_tasks)
    : rows_(num_tasks, std::vector<std::optional<double>>(num_tasks)) {}

void AccuracyMatrix::set(std::size_t after_task, std::size_t eval_task, double accuracy) {
  if (after_task >= num_tasks() || eval_task >= num_tasks()) {
    throw DimensionError("accuracy matrix index out of range");
  }
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw DomainError("accuracy must lie in [0,1]");
  rows_[after_task][eval_task] = accuracy;
}

std::optional<double> AccuracyMatrix::get(std::size_t after_task, std::size_t eval_task) const {
  if (after_task >= num_tasks() || eval_task >= num_tasks()) {
    throw DimensionError("accuracy matrix index out of range");
  }
  return rows_[after_task][eval_task];
}

double acc_metric(const AccuracyMatrix& r) {
  const std::size_t t = r.num_tasks();
  if (t == 0) throw ContractError("ACC of an empty accuracy matrix");
  double total = 0.0;
  for (std::size_t j = 0; j < t; ++j) {
    auto v = r.get(t - 1, j);
    if (!v) throw ContractError("ACC needs the last row complete; task " + std::to_string(j) + " missing");
    total += *v;
  }
  return total / static_cast<double>(t);
}

std::optional<double> bwt_metric(const AccuracyMatrix& r) {
  const std::size_t t = r.num_tasks();
  if (t <= 1) return std::nullopt;
  double total = 0.0;
  for (std::size_t j = 0; j + 1 < t; ++j) {
    auto last = r.get(t - 1, j);
    auto diag = r.get(j, j);
    if (!last || !diag) throw ContractError("BWT needs the diagonal and last row");
    total += *last - *diag;
  }
  return total / static_cast<double>(t - 1);
}

DriftResult ema_drift_probe(MlpModel& model, const std::vector<Batch>& test_sets,
                            const std::vector<Batch>& refresh_batches, Classifier classifier,
                            const Batch* exemplars) {
  const auto snapshot = model.running_stats();
  auto evaluate_all = [&] {
    std::optional<ClassMeans> means;
    if (classifier == Classifier::Ncm) {
      if (!exemplars) throw ContractError("NCM drift probe needs exemplars");
      means = compute_class_means(model, *exemplars);
    }
    std::vector<double> accs;
    for (const auto& test : test_sets)
      accs.push_back(evaluate_task(model, test, classifier, means ? &*means : nullptr));
    return accs;
  };
  DriftResult result;
  result.before = evaluate_all();
  for (const auto& batch : refresh_batches) ema_refresh_pass(model, inputs_tensor(batch));
  result.after = evaluate_all();
  model.restore_running_stats(snapshot);
  return result;
}

std::vector<ActivationRow> export_activations(MlpModel& model, const Batch& samples) {
  std::vector<ActivationRow> rows;
  rows.reserve(samples.size());
  constexpr std::size_t chunk = 128;
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const auto end = std::min(samples.size(), start + chunk);
    Batch part(samples.begin() + static_cast<long>(start), samples.begin() + static_cast<long>(end));
    Graph g(Graph::Recording::Off);
    auto out = model.forward(g, inputs_tensor(part), NormMode::inference());
    const std::size_t classes = out.logits.cols(), dim = out.features.cols();
    auto z = out.logits.values();
    auto f = out.features.values();
    for (std::size_t b = 0; b < part.size(); ++b) {
      auto row = z.subspan(b * classes, classes);
      ActivationRow r;
      r.label = part[b].label;
      r.prediction = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      r.features.assign(f.begin() + static_cast<long>(b * dim), f.begin() + static_cast<long>((b + 1) * dim));
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

void write_activations_csv(const std::vector<ActivationRow>& rows, std::ostream& out) {
  const std::size_t dim = rows.empty() ? 0 : rows.front().features.size();
  out << "label,prediction";
  for (std::size_t d = 0; d < dim; ++d) out << ",f" << d;
  out << '\n';
  for (const auto& r : rows) {
    out << r.label << ',' << r.prediction;
    for (double v : r.features) out << ',' << format_double(v);
    out << '\n';
  }
}

std::vector<ActivationRow> read_activations_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) return {};
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "label" || header[1] != "prediction") {
    throw ContractError("activation CSV header must start with label,prediction");
  }
  std::vector<ActivationRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) throw ContractError("ragged activation CSV row");
    ActivationRow r;
    r.label = static_cast<int>(parse_int(fields[0]));
    r.prediction = static_cast<int>(parse_int(fields[1]));
    for (std::size_t i = 2; i < fields.size(); ++i) r.features.push_back(parse_double(fields[i]));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace clbench
