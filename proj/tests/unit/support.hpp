#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <random>
#include <vector>

#include "clbench/data.hpp"
#include "clbench/graph.hpp"
#include "clbench/model.hpp"

namespace testing {

using namespace clbench;

inline Batch random_batch(std::size_t n, std::size_t dim, std::vector<int> labels, Rng& rng,
                          double offset = 0.0) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Batch b(n);
  for (std::size_t i = 0; i < n; ++i) {
    b[i].input.resize(dim);
    for (auto& v : b[i].input) v = offset + normal(rng);
    b[i].label = labels[i % labels.size()];
  }
  return b;
}

inline MlpModel small_model(Rng& rng, std::size_t in = 4, std::vector<std::size_t> hidden = {5, 3},
                            std::size_t classes = 3) {
  ModelConfig cfg;
  cfg.input_dim = in;
  cfg.hidden = std::move(hidden);
  cfg.num_classes = classes;
  return MlpModel(cfg, rng);
}

// Largest relative error between analytic gradients and central
// differences over every entry of every tensor in `params`. `loss` must
// build a fresh graph and not move any running statistic.
inline double max_fd_error(std::vector<Tensor> params, const std::function<Tensor(Graph&)>& loss,
                           double h = 1e-5, double floor = 1e-5) {
  for (auto& p : params) p.zero_grad();
  {
    Graph g;
    g.backward(loss(g));
  }
  auto value = [&] {
    Graph g(Graph::Recording::Off);
    return loss(g).item();
  };
  double worst = 0.0;
  for (auto& p : params) {
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto v = p.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + h;
      const double up = value();
      v[i] = saved - h;
      const double down = value();
      v[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

inline bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) {
           return std::memcmp(&x, &y, sizeof(double)) == 0;
         });
}

// Upper alpha quantile of chi-square with k degrees of freedom
// (Wilson-Hilferty), z the matching standard normal quantile.
inline double chi2_critical(double k, double z) {
  const double a = 2.0 / (9.0 * k);
  return k * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

// Greedy herding recomputed from scratch every step: the candidate subset
// mean is rebuilt from the selected rows, in long double. Distances within
// a relative 1e-12 count as ties.
inline std::vector<std::size_t> herding_oracle(const std::vector<std::vector<double>>& f, std::size_t m) {
  const std::size_t n = f.size(), d = f[0].size();
  std::vector<long double> c(d, 0.0L);
  for (const auto& row : f)
    for (std::size_t j = 0; j < d; ++j) c[j] += row[j];
  for (auto& v : c) v /= static_cast<long double>(n);
  std::vector<std::size_t> chosen;
  while (chosen.size() < m) {
    std::size_t best = n;
    long double best_d = 0.0L;
    for (std::size_t x = 0; x < n; ++x) {
      if (std::find(chosen.begin(), chosen.end(), x) != chosen.end()) continue;
      std::vector<long double> mu(d, 0.0L);
      for (auto s : chosen)
        for (std::size_t j = 0; j < d; ++j) mu[j] += f[s][j];
      for (std::size_t j = 0; j < d; ++j) mu[j] = (mu[j] + f[x][j]) / static_cast<long double>(chosen.size() + 1);
      long double dist = 0.0L;
      for (std::size_t j = 0; j < d; ++j) dist += (c[j] - mu[j]) * (c[j] - mu[j]);
      if (best == n || dist < best_d * (1.0L - 1e-12L)) {
        best = x;
        best_d = dist;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

}  // namespace testing
