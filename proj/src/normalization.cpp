#include "clbench/normalization.hpp"

#include <cmath>
#include <string>

#include "clbench/model.hpp"

namespace clbench {

BatchNormState::BatchNormState(std::size_t features, double momentum, double epsilon)
    : scale_(Shape{features}, std::vector<double>(features, 1.0), true),
      shift_(Tensor::zeros({features}, true)),
      running_{std::vector<double>(features, 0.0), std::vector<double>(features, 1.0)},
      momentum_(momentum),
      epsilon_(epsilon) {
  if (!(momentum > 0.0 && momentum < 1.0)) {
    throw DomainError("BN momentum must lie in (0,1), got " + std::to_string(momentum));
  }
  if (!(epsilon > 0.0)) throw DomainError("BN epsilon must be positive");
}

void BatchNormState::ema_update(const std::vector<double>& batch_mean,
                                const std::vector<double>& batch_var) {
  if (batch_mean.size() != features() || batch_var.size() != features()) {
    throw DimensionError("ema_update: moments of size " + std::to_string(batch_mean.size()) +
                         "/" + std::to_string(batch_var.size()) + " for " +
                         std::to_string(features()) + " features");
  }
  for (std::size_t c = 0; c < features(); ++c) {
    if (!std::isfinite(batch_mean[c]) || !std::isfinite(batch_var[c])) {
      throw DomainError("ema_update: non-finite moment at feature " + std::to_string(c));
    }
    if (batch_var[c] < 0.0) {
      throw DomainError("ema_update: negative variance at feature " + std::to_string(c));
    }
  }
  const double a = momentum_;
  for (std::size_t c = 0; c < features(); ++c) {
    running_.mean[c] = a * running_.mean[c] + (1.0 - a) * batch_mean[c];
    running_.var[c] = a * running_.var[c] + (1.0 - a) * batch_var[c];
  }
}

void BatchNormState::restore_running(Moments snapshot) {
  if (snapshot.mean.size() != features() || snapshot.var.size() != features()) {
    throw DimensionError("restore_running: snapshot size mismatch");
  }
  running_ = std::move(snapshot);
}

BatchNormState BatchNormState::clone() const {
  BatchNormState copy(*this);
  copy.scale_ = scale_.clone();
  copy.shift_ = shift_.clone();
  return copy;
}

Moments batch_moments(const Tensor& x) {
  if (x.shape().size() != 2) {
    throw DimensionError("batch_moments expects [B,C], got " + shape_str(x.shape()));
  }
  const auto batch = x.rows(), feats = x.cols();
  if (batch == 0) throw ContractError("batch_moments on an empty batch");
  Moments m{std::vector<double>(feats, 0.0), std::vector<double>(feats, 0.0)};
  auto v = x.values();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < feats; ++c) m.mean[c] += v[b * feats + c];
  for (auto& mu : m.mean) mu /= static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < feats; ++c) {
      const double d = v[b * feats + c] - m.mean[c];
      m.var[c] += d * d;
    }
  for (auto& s : m.var) s /= static_cast<double>(batch);
  return m;
}

void ema_update(BatchNormState& state, const std::vector<double>& batch_mean,
                const std::vector<double>& batch_var) {
  state.ema_update(batch_mean, batch_var);
}

Tensor bn_forward(Graph& g, const Tensor& x, BatchNormState& state, NormMode mode) {
  if (x.shape().size() != 2 || x.cols() != state.features()) {
    throw DimensionError("bn_forward: input " + shape_str(x.shape()) + " for " +
                         std::to_string(state.features()) + " features");
  }
  const auto batch = x.rows(), feats = x.cols();
  const bool use_batch = mode.source() == StatsSource::BatchMoments;
  Moments stats = use_batch ? batch_moments(x) : state.running();

  std::vector<double> inv_std(feats);
  for (std::size_t c = 0; c < feats; ++c) inv_std[c] = 1.0 / std::sqrt(stats.var[c] + state.epsilon());

  auto xv = x.values();
  auto gamma = state.scale().values();
  auto beta = state.shift().values();
  std::vector<double> xhat(batch * feats), y(batch * feats);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < feats; ++c) {
      const std::size_t i = b * feats + c;
      xhat[i] = (xv[i] - stats.mean[c]) * inv_std[c];
      y[i] = gamma[c] * xhat[i] + beta[c];
    }

  Tensor gamma_t = state.scale();
  Tensor beta_t = state.shift();
  const bool track = g.tracks({&x, &gamma_t, &beta_t});
  Tensor out(x.shape(), std::move(y), track);
  if (track) {
    g.record(out, [x, gamma_t, beta_t, out, xhat = std::move(xhat), inv_std, use_batch, batch,
                   feats]() mutable {
      auto dy = out.grad();
      std::vector<double> sum_dy(feats, 0.0), sum_dy_xhat(feats, 0.0);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < feats; ++c) {
          const std::size_t i = b * feats + c;
          sum_dy[c] += dy[i];
          sum_dy_xhat[c] += dy[i] * xhat[i];
        }
      if (gamma_t.requires_grad()) {
        auto dg = gamma_t.grad();
        for (std::size_t c = 0; c < feats; ++c) dg[c] += sum_dy_xhat[c];
      }
      if (beta_t.requires_grad()) {
        auto db = beta_t.grad();
        for (std::size_t c = 0; c < feats; ++c) db[c] += sum_dy[c];
      }
      if (!x.requires_grad()) return;
      auto dx = x.grad();
      auto gamma = gamma_t.values();
      const double n = static_cast<double>(batch);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < feats; ++c) {
          const std::size_t i = b * feats + c;
          if (use_batch) {
            dx[i] += gamma[c] * inv_std[c] *
                     (dy[i] - sum_dy[c] / n - xhat[i] * sum_dy_xhat[c] / n);
          } else {
            dx[i] += gamma[c] * inv_std[c] * dy[i];
          }
        }
    });
  }
  if (mode.update() == EmaUpdate::Update) state.ema_update(stats.mean, stats.var);
  return out;
}

void ema_refresh_pass(MlpModel& model, const Tensor& batch) {
  if (batch.shape().empty() || batch.shape()[0] == 0) {
    throw ContractError("ema_refresh_pass on an empty batch");
  }
  Graph g(Graph::Recording::Off);
  model.forward(g, batch, NormMode::train());
}

}  // namespace clbench
