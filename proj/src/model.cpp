#include "clbench/model.hpp"

#include <algorithm>
#include <cmath>

namespace clbench {

namespace {

LinearLayer make_linear(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> w(in * out);
  for (auto& v : w) v = dist(rng);
  return {Tensor({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
}

}  // namespace

MlpModel::MlpModel(const ModelConfig& config, Rng& rng) : config_(config) {
  if (config.input_dim == 0 || config.num_classes == 0) {
    throw ContractError("model needs positive input and class dimensions");
  }
  std::size_t in = config.input_dim;
  for (std::size_t width : config.hidden) {
    if (width == 0) throw ContractError("hidden layer width must be positive");
    linears_.push_back(make_linear(in, width, rng));
    norms_.emplace_back(width, config.bn_momentum, config.bn_epsilon);
    in = width;
  }
  linears_.push_back(make_linear(in, config.num_classes, rng));
}

std::size_t MlpModel::feature_dim() const {
  return config_.hidden.empty() ? config_.input_dim : config_.hidden.back();
}

MlpModel::Output MlpModel::forward(Graph& g, const Tensor& x, NormMode mode) {
  Tensor h = x;
  for (std::size_t i = 0; i < norms_.size(); ++i) {
    h = linear(g, h, linears_[i].weight, linears_[i].bias);
    h = bn_forward(g, h, norms_[i], mode);
    h = relu(g, h);
  }
  const auto& head = linears_.back();
  return {linear(g, h, head.weight, head.bias), h};
}

std::vector<Tensor> MlpModel::parameters() const {
  std::vector<Tensor> params;
  for (std::size_t i = 0; i < norms_.size(); ++i) {
    params.push_back(linears_[i].weight);
    params.push_back(linears_[i].bias);
    params.push_back(norms_[i].scale());
    params.push_back(norms_[i].shift());
  }
  params.push_back(linears_.back().weight);
  params.push_back(linears_.back().bias);
  return params;
}

MlpModel MlpModel::clone() const {
  MlpModel copy;
  copy.config_ = config_;
  for (const auto& l : linears_) copy.linears_.push_back({l.weight.clone(), l.bias.clone()});
  for (const auto& n : norms_) copy.norms_.push_back(n.clone());
  return copy;
}

std::vector<double> MlpModel::flat_parameters() const {
  std::vector<double> flat;
  for (const auto& p : parameters()) flat.insert(flat.end(), p.values().begin(), p.values().end());
  return flat;
}

std::vector<Moments> MlpModel::running_stats() const {
  std::vector<Moments> stats;
  for (const auto& n : norms_) stats.push_back(n.running());
  return stats;
}

void MlpModel::restore_running_stats(const std::vector<Moments>& stats) {
  if (stats.size() != norms_.size()) throw DimensionError("running stats snapshot size mismatch");
  for (std::size_t i = 0; i < norms_.size(); ++i) norms_[i].restore_running(stats[i]);
}

std::vector<std::vector<double>> embed(MlpModel& model, const Batch& batch, std::size_t chunk) {
  std::vector<std::vector<double>> rows;
  rows.reserve(batch.size());
  for (std::size_t start = 0; start < batch.size(); start += chunk) {
    const auto end = std::min(batch.size(), start + chunk);
    Batch part(batch.begin() + static_cast<long>(start), batch.begin() + static_cast<long>(end));
    Graph g(Graph::Recording::Off);
    auto out = model.forward(g, inputs_tensor(part), NormMode::inference());
    const std::size_t dim = out.features.cols();
    auto f = out.features.values();
    for (std::size_t b = 0; b < part.size(); ++b) {
      std::vector<double> row(f.begin() + static_cast<long>(b * dim),
                              f.begin() + static_cast<long>((b + 1) * dim));
      double norm = 0.0;
      for (double v : row) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > 0.0)
        for (auto& v : row) v /= norm;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void sgd_step(std::span<Tensor> params, double lr, double weight_decay) {
  for (auto& p : params) {
    auto v = p.values();
    auto g = p.grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * (g[i] + 2.0 * weight_decay * v[i]);
    p.zero_grad();
  }
}

void zero_grads(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace clbench
