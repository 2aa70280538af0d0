#include "clbench/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace clbench {

Graph::Graph(Recording recording) : recording_(recording) {}

bool Graph::tracks(std::initializer_list<const Tensor*> inputs) const {
  if (!recording()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

void Graph::record(Tensor output, std::function<void()> backward) {
  records_.push_back({std::move(output), std::move(backward)});
}

void Graph::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_str(loss.shape()));
  }
  auto attached = std::any_of(records_.begin(), records_.end(),
                              [&](const Record& r) { return r.output.same_storage(loss); });
  if (!attached) throw ContractError("backward() on a loss that is not recorded in this graph");

  for (auto& r : records_) {
    r.output.grad();
    r.output.zero_grad();
  }
  Tensor root = loss;
  root.grad()[0] = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->backward();
}

namespace {

void require_2d(const Tensor& t, const char* name) {
  if (t.shape().size() != 2) {
    throw DimensionError(std::string(name) + " must be 2-D, got " + shape_str(t.shape()));
  }
}

Tensor output_like(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

Tensor linear(Graph& g, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_2d(x, "linear input x");
  require_2d(weight, "linear weight");
  const auto batch = x.rows(), in = x.cols(), out = weight.cols();
  if (weight.rows() != in) {
    throw DimensionError("linear: x " + shape_str(x.shape()) + " does not conform to weight " +
                         shape_str(weight.shape()));
  }
  if (bias.shape() != Shape{out}) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  }
  std::vector<double> y(batch * out);
  auto xv = x.values();
  auto wv = weight.values();
  auto bv = bias.values();
  for (std::size_t b = 0; b < batch; ++b) {
    double* row = &y[b * out];
    std::copy(bv.begin(), bv.end(), row);
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xv[b * in + i];
      const double* wrow = &wv[i * out];
      for (std::size_t o = 0; o < out; ++o) row[o] += xi * wrow[o];
    }
  }
  bool track = g.tracks({&x, &weight, &bias});
  Tensor result = output_like({batch, out}, std::move(y), track);
  if (track) {
    g.record(result, [x, weight, bias, result, batch, in, out]() mutable {
      auto dy = result.grad();
      if (x.requires_grad()) {
        auto dx = x.grad();
        auto wv = weight.values();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t i = 0; i < in; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < out; ++o) acc += dy[b * out + o] * wv[i * out + o];
            dx[b * in + i] += acc;
          }
      }
      if (weight.requires_grad()) {
        auto dw = weight.grad();
        auto xv = x.values();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t i = 0; i < in; ++i) {
            const double xi = xv[b * in + i];
            for (std::size_t o = 0; o < out; ++o) dw[i * out + o] += xi * dy[b * out + o];
          }
      }
      if (bias.requires_grad()) {
        auto db = bias.grad();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t o = 0; o < out; ++o) db[o] += dy[b * out + o];
      }
    });
  }
  return result;
}

Tensor relu(Graph& g, const Tensor& x) {
  std::vector<double> y(x.values().begin(), x.values().end());
  for (auto& v : y) v = v > 0.0 ? v : 0.0;
  bool track = g.tracks({&x});
  Tensor result = output_like(x.shape(), std::move(y), track);
  if (track) {
    g.record(result, [x, result]() mutable {
      auto dy = result.grad();
      auto xv = x.values();
      auto dx = x.grad();
      for (std::size_t i = 0; i < dx.size(); ++i)
        if (xv[i] > 0.0) dx[i] += dy[i];
    });
  }
  return result;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] + b.values()[i];
  bool track = g.tracks({&a, &b});
  Tensor result = output_like(a.shape(), std::move(y), track);
  if (track) {
    g.record(result, [a, b, result]() mutable {
      auto dy = result.grad();
      if (a.requires_grad()) {
        auto da = a.grad();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
      }
    });
  }
  return result;
}

Tensor scale(Graph& g, const Tensor& a, double factor) {
  std::vector<double> y(a.values().begin(), a.values().end());
  for (auto& v : y) v *= factor;
  bool track = g.tracks({&a});
  Tensor result = output_like(a.shape(), std::move(y), track);
  if (track) {
    g.record(result, [a, result, factor]() mutable {
      auto dy = result.grad();
      auto da = a.grad();
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += factor * dy[i];
    });
  }
  return result;
}

Tensor sum(Graph& g, const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  bool track = g.tracks({&a});
  Tensor result = output_like({1}, {s}, track);
  if (track) {
    g.record(result, [a, result]() mutable {
      const double dy = result.grad()[0];
      for (auto& d : a.grad()) d += dy;
    });
  }
  return result;
}

Tensor mean(Graph& g, const Tensor& a) {
  if (a.size() == 0) throw ContractError("mean of an empty tensor");
  const double n = static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a.values()) s += v;
  bool track = g.tracks({&a});
  Tensor result = output_like({1}, {s / n}, track);
  if (track) {
    g.record(result, [a, result, n]() mutable {
      const double dy = result.grad()[0] / n;
      for (auto& d : a.grad()) d += dy;
    });
  }
  return result;
}

Tensor softmax_ce_loss(Graph& g, const Tensor& logits, std::span<const int> labels) {
  require_2d(logits, "softmax_ce logits");
  if (logits.rows() == 0) throw ContractError("softmax_ce_loss on an empty batch");
  std::vector<double> weights(logits.rows(), 1.0 / static_cast<double>(logits.rows()));
  return weighted_softmax_ce_loss(g, logits, labels, weights);
}

Tensor weighted_softmax_ce_loss(Graph& g, const Tensor& logits, std::span<const int> labels,
                                std::span<const double> weights) {
  require_2d(logits, "softmax_ce logits");
  const auto batch = logits.rows(), classes = logits.cols();
  if (batch == 0) throw ContractError("softmax_ce_loss on an empty batch");
  if (labels.size() != batch || weights.size() != batch) {
    throw DimensionError("softmax_ce: " + std::to_string(batch) + " rows but " +
                         std::to_string(labels.size()) + " labels and " +
                         std::to_string(weights.size()) + " weights");
  }
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= classes) {
      throw LabelError("label " + std::to_string(labels[b]) + " at batch index " +
                       std::to_string(b) + " outside [0," + std::to_string(classes) + ")");
    }
  }
  auto z = logits.values();
  std::vector<double> probs(batch * classes);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = &z[b * classes];
    const double peak = *std::max_element(row, row + classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[b * classes + c] = std::exp(row[c] - peak);
      denom += probs[b * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] /= denom;
    const double ce = std::log(denom) + peak - row[labels[b]];
    loss += weights[b] * ce;
  }
  bool track = g.tracks({&logits});
  Tensor result = output_like({1}, {loss}, track);
  if (track) {
    std::vector<int> lab(labels.begin(), labels.end());
    std::vector<double> w(weights.begin(), weights.end());
    g.record(result, [logits, result, probs = std::move(probs), lab = std::move(lab),
                      w = std::move(w), batch, classes]() mutable {
      const double dy = result.grad()[0];
      auto dz = logits.grad();
      for (std::size_t b = 0; b < batch; ++b) {
        const double scale_b = dy * w[b];
        for (std::size_t c = 0; c < classes; ++c) {
          double p = probs[b * classes + c];
          if (static_cast<int>(c) == lab[b]) p -= 1.0;
          dz[b * classes + c] += scale_b * p;
        }
      }
    });
  }
  return result;
}

Tensor logit_mse_loss(Graph& g, const Tensor& current, const Tensor& stored) {
  if (current.shape() != stored.shape()) {
    throw DimensionError("logit_mse: current " + shape_str(current.shape()) + " vs stored " +
                         shape_str(stored.shape()));
  }
  if (current.size() == 0) throw ContractError("logit_mse_loss on an empty batch");
  const double n = static_cast<double>(current.size());
  auto c = current.values();
  auto s = stored.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) acc += (c[i] - s[i]) * (c[i] - s[i]);
  bool track = g.tracks({&current});
  Tensor result = output_like({1}, {acc / n}, track);
  if (track) {
    g.record(result, [current, stored, result, n]() mutable {
      const double dy = result.grad()[0];
      auto c = current.values();
      auto s = stored.values();
      auto dc = current.grad();
      for (std::size_t i = 0; i < dc.size(); ++i) dc[i] += dy * 2.0 * (c[i] - s[i]) / n;
    });
  }
  return result;
}

Tensor sigmoid_bce_loss(Graph& g, const Tensor& logits, const Tensor& targets,
                        std::span<const std::uint8_t> column_mask) {
  require_2d(logits, "sigmoid_bce logits");
  if (logits.shape() != targets.shape()) {
    throw DimensionError("sigmoid_bce: logits " + shape_str(logits.shape()) + " vs targets " +
                         shape_str(targets.shape()));
  }
  const auto batch = logits.rows(), classes = logits.cols();
  if (!column_mask.empty() && column_mask.size() != classes) {
    throw DimensionError("sigmoid_bce: mask of " + std::to_string(column_mask.size()) +
                         " columns for " + std::to_string(classes) + " logits");
  }
  auto active = [&](std::size_t c) { return column_mask.empty() || column_mask[c] != 0; };
  std::size_t active_cols = 0;
  for (std::size_t c = 0; c < classes; ++c) active_cols += active(c) ? 1 : 0;
  if (batch == 0 || active_cols == 0) throw ContractError("sigmoid_bce_loss with no entries");

  auto z = logits.values();
  auto t = targets.values();
  double acc = 0.0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < classes; ++c) {
      if (!active(c)) continue;
      const double zi = z[b * classes + c], ti = t[b * classes + c];
      if (!(ti >= 0.0 && ti <= 1.0)) {
        throw DomainError("sigmoid_bce target " + std::to_string(ti) + " at (" +
                          std::to_string(b) + "," + std::to_string(c) + ") outside [0,1]");
      }
      acc += std::max(zi, 0.0) - zi * ti + std::log1p(std::exp(-std::abs(zi)));
    }
  const double n = static_cast<double>(batch * active_cols);
  bool track = g.tracks({&logits});
  Tensor result = output_like({1}, {acc / n}, track);
  if (track) {
    std::vector<std::uint8_t> mask(column_mask.begin(), column_mask.end());
    g.record(result, [logits, targets, result, mask = std::move(mask), n, batch,
                      classes]() mutable {
      const double dy = result.grad()[0] / n;
      auto z = logits.values();
      auto t = targets.values();
      auto dz = logits.grad();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < classes; ++c) {
          if (!mask.empty() && mask[c] == 0) continue;
          const std::size_t i = b * classes + c;
          dz[i] += dy * (sigmoid(z[i]) - t[i]);
        }
    });
  }
  return result;
}

}  // namespace clbench
