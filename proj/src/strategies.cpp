#include "clbench/strategies.hpp"

#include <algorithm>
#include <array>

namespace clbench {

namespace {

constexpr std::array kMethods{
    std::pair{Method::SGD_only, "SGD_only"},
    std::pair{Method::ER, "ER"},
    std::pair{Method::ER_BalanceBatch, "ER_BalanceBatch"},
    std::pair{Method::ER_CurBuf, "ER_CurBuf"},
    std::pair{Method::ER_CurPrev, "ER_CurPrev"},
    std::pair{Method::ER_BNT, "ER_BNT"},
    std::pair{Method::ER_BalanceJointTrain, "ER_BalanceJointTrain"},
    std::pair{Method::ER_BNT_NoSimulator, "ER_BNT_NoSimulator"},
    std::pair{Method::ER_BNT_ImbalanceTracker, "ER_BNT_ImbalanceTracker"},
    std::pair{Method::DERpp, "DERpp"},
    std::pair{Method::DERpp_BNT, "DERpp_BNT"},
    std::pair{Method::iCaRL, "iCaRL"},
    std::pair{Method::iCaRL_Concat, "iCaRL_Concat"},
    std::pair{Method::iCaRL_BNT, "iCaRL_BNT"},
    std::pair{Method::iCaRL_BNT_NoSimulator, "iCaRL_BNT_NoSimulator"},
    std::pair{Method::iCaRL_BNT_ImbalanceTracker, "iCaRL_BNT_ImbalanceTracker"},
};

constexpr auto kMethodList = [] {
  std::array<Method, kMethods.size()> out{};
  for (std::size_t i = 0; i < kMethods.size(); ++i) out[i] = kMethods[i].first;
  return out;
}();

NormMode param_mode(const StrategyConfig& config) {
  return config.bnt_param_stats == BntParamStats::BatchMoments ? NormMode::frozen_batch()
                                                               : NormMode::inference();
}

// Running statistics must not move between construction and verify().
class FrozenEmaCheck {
 public:
  FrozenEmaCheck(const MlpModel& model, FrozenEmaAudit* audit) : model_(model), audit_(audit) {
    if (audit_) snapshot_ = model.running_stats();
  }
  void verify() {
    if (!audit_) return;
    ++audit_->checks;
    if (model_.running_stats() != snapshot_) ++audit_->violations;
  }

 private:
  const MlpModel& model_;
  FrozenEmaAudit* audit_;
  std::vector<Moments> snapshot_;
};

Tensor ce_loss(Graph& g, MlpModel& model, const Batch& batch, NormMode mode,
               std::vector<double>* logits_out = nullptr) {
  auto out = model.forward(g, inputs_tensor(batch), mode);
  if (logits_out) logits_out->assign(out.logits.values().begin(), out.logits.values().end());
  return softmax_ce_loss(g, out.logits, labels_of(batch));
}

StepResult finish(Graph& g, const Tensor& loss, MlpModel& model, double lr,
                  double weight_decay = 0.0) {
  g.backward(loss);
  auto params = model.parameters();
  sgd_step(params, lr, weight_decay);
  return {loss.item(), {}};
}

void require_current(const Batch& current) {
  if (current.empty()) throw ContractError("training step needs a non-empty current batch");
}

// Shared by ER and ER-Balance-Batch: one forward over current + copies of
// the buffer batch, buffer rows down-weighted by the number of copies.
StepResult concat_replay_step(MlpModel& model, const Batch& current, const Batch& buffer_batch,
                              std::size_t copies, StepContext& ctx) {
  require_current(current);
  Batch batch = current;
  for (std::size_t c = 0; c < copies; ++c) batch.insert(batch.end(), buffer_batch.begin(), buffer_batch.end());
  const double denom = static_cast<double>(current.size() + buffer_batch.size());
  std::vector<double> weights(batch.size(), 1.0 / denom);
  for (std::size_t i = current.size(); i < batch.size(); ++i)
    weights[i] = 1.0 / (static_cast<double>(copies) * denom);
  Graph g;
  auto out = model.forward(g, inputs_tensor(batch), NormMode::train());
  auto loss = weighted_softmax_ce_loss(g, out.logits, labels_of(batch), weights);
  return finish(g, loss, model, ctx.config.lr);
}

}  // namespace

std::string_view method_name(Method method) {
  for (const auto& [m, name] : kMethods)
    if (m == method) return name;
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (const auto& [m, n] : kMethods)
    if (n == name) return m;
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

std::span<const Method> all_methods() { return kMethodList; }

bool is_icarl_family(Method m) {
  return m == Method::iCaRL || m == Method::iCaRL_Concat || m == Method::iCaRL_BNT ||
         m == Method::iCaRL_BNT_NoSimulator || m == Method::iCaRL_BNT_ImbalanceTracker;
}

bool is_derpp_family(Method m) { return m == Method::DERpp || m == Method::DERpp_BNT; }

bool uses_reservoir(Method m) { return m != Method::SGD_only && !is_icarl_family(m); }

StepResult step_sgd(MlpModel& model, const Batch& current, StepContext& ctx) {
  require_current(current);
  Graph g;
  auto loss = ce_loss(g, model, current, NormMode::train());
  return finish(g, loss, model, ctx.config.lr);
}

StepResult step_er(MlpModel& model, const Batch& current, const Batch& buffer_batch,
                   StepContext& ctx) {
  return concat_replay_step(model, current, buffer_batch, 1, ctx);
}

StepResult step_er_balance_batch(MlpModel& model, const Batch& current, const Batch& buffer_batch,
                                 int task_index, StepContext& ctx) {
  if (task_index < 1) throw ContractError("task_index is 1-based");
  if (task_index == 1) return concat_replay_step(model, current, {}, 1, ctx);
  return concat_replay_step(model, current, buffer_batch, static_cast<std::size_t>(task_index - 1),
                            ctx);
}

StepResult step_er_cur_x(MlpModel& model, const Batch& current, const Batch& other,
                         StepContext& ctx) {
  require_current(current);
  Graph g;
  auto loss = ce_loss(g, model, current, NormMode::train());
  if (!other.empty()) loss = add(g, loss, ce_loss(g, model, other, NormMode::train()));
  return finish(g, loss, model, ctx.config.lr);
}

StepResult step_er_bnt(MlpModel& model, const Batch& current, const Batch& buffer_batch,
                       StepContext& ctx) {
  require_current(current);
  ema_refresh_pass(model, inputs_tensor(balance(current, buffer_batch, ctx.rng)));
  FrozenEmaCheck frozen(model, ctx.audit);
  const auto mode = param_mode(ctx.config);
  Graph g;
  auto loss = ce_loss(g, model, current, mode);
  if (!buffer_batch.empty()) loss = add(g, loss, ce_loss(g, model, buffer_batch, mode));
  frozen.verify();
  return finish(g, loss, model, ctx.config.lr);
}

StepResult step_er_balance_joint_train(MlpModel& model, const Batch& current,
                                       const Batch& buffer_batch, StepContext& ctx) {
  require_current(current);
  ema_refresh_pass(model, inputs_tensor(balance(current, buffer_batch, ctx.rng)));
  FrozenEmaCheck frozen(model, ctx.audit);
  const auto mode = param_mode(ctx.config);
  Graph g;
  auto loss = ce_loss(g, model, concat(current, buffer_batch), mode);
  if (!buffer_batch.empty()) loss = add(g, loss, ce_loss(g, model, buffer_batch, mode));
  frozen.verify();
  return finish(g, loss, model, ctx.config.lr);
}

StepResult step_er_bnt_no_simulator(MlpModel& model, const Batch& current,
                                    const Batch& buffer_batch, const Batch& previous,
                                    StepContext& ctx) {
  require_current(current);
  ema_refresh_pass(model, inputs_tensor(balance(current, buffer_batch, ctx.rng)));
  FrozenEmaCheck frozen(model, ctx.audit);
  const auto mode = param_mode(ctx.config);
  Graph g;
  auto loss = ce_loss(g, model, current, mode);
  if (!previous.empty()) loss = add(g, loss, ce_loss(g, model, previous, mode));
  frozen.verify();
  return finish(g, loss, model, ctx.config.lr);
}

StepResult step_derpp(MlpModel& model, const Batch& current, const Batch& buffer_m1,
                      const Batch& buffer_m2, bool bnt, StepContext& ctx) {
  require_current(current);
  const double alpha = ctx.config.derpp_alpha;
  const double beta = ctx.config.derpp_beta;
  const std::size_t classes = model.num_classes();
  std::vector<double> current_logits;

  if (!bnt) {
    Graph g;
    auto loss = ce_loss(g, model, current, NormMode::train(), &current_logits);
    if (!buffer_m1.empty()) {
      auto stored = stored_logits_tensor(buffer_m1, classes);
      auto out = model.forward(g, inputs_tensor(buffer_m1), NormMode::train());
      loss = add(g, loss, scale(g, logit_mse_loss(g, out.logits, stored), alpha));
    }
    if (!buffer_m2.empty()) {
      loss = add(g, loss, scale(g, ce_loss(g, model, buffer_m2, NormMode::train()), beta));
    }
    auto result = finish(g, loss, model, ctx.config.lr);
    result.current_logits = std::move(current_logits);
    return result;
  }

  const Batch& buffer_batch = buffer_m1;
  std::optional<Tensor> stored;
  if (!buffer_batch.empty()) stored = stored_logits_tensor(buffer_batch, classes);
  ema_refresh_pass(model, inputs_tensor(balance(current, buffer_batch, ctx.rng)));
  FrozenEmaCheck frozen(model, ctx.audit);
  const auto mode = param_mode(ctx.config);
  Graph g;
  auto loss = ce_loss(g, model, current, mode, &current_logits);
  if (!buffer_batch.empty()) {
    auto out = model.forward(g, inputs_tensor(buffer_batch), mode);
    auto kd = logit_mse_loss(g, out.logits, *stored);
    auto ce = softmax_ce_loss(g, out.logits, labels_of(buffer_batch));
    loss = add(g, add(g, loss, scale(g, kd, alpha)), scale(g, ce, beta));
  }
  frozen.verify();
  auto result = finish(g, loss, model, ctx.config.lr);
  result.current_logits = std::move(current_logits);
  return result;
}

double icarl_lambda(std::size_t buffer_size, std::size_t task_size) {
  if (task_size == 0) throw ConfigError("iCaRL loss weighting needs a non-empty task");
  return static_cast<double>(buffer_size) / static_cast<double>(task_size);
}

IcarlTargets icarl_targets(const Batch& batch, std::span<const int> current_classes,
                           const TeacherSnapshot* teacher, std::size_t num_classes) {
  IcarlTargets out{Tensor::zeros({batch.size(), num_classes}), std::vector<std::uint8_t>(num_classes, 0)};
  auto t = out.targets.values();
  if (teacher && !teacher->seen_classes.empty()) {
    Graph g(Graph::Recording::Off);
    auto logits = teacher->model.forward(g, inputs_tensor(batch), NormMode::inference()).logits;
    auto z = logits.values();
    for (int c : teacher->seen_classes) {
      out.mask[static_cast<std::size_t>(c)] = 1;
      for (std::size_t b = 0; b < batch.size(); ++b)
        t[b * num_classes + static_cast<std::size_t>(c)] = sigmoid(z[b * num_classes + static_cast<std::size_t>(c)]);
    }
  }
  for (int c : current_classes) {
    out.mask[static_cast<std::size_t>(c)] = 1;
    for (std::size_t b = 0; b < batch.size(); ++b)
      t[b * num_classes + static_cast<std::size_t>(c)] = batch[b].label == c ? 1.0 : 0.0;
  }
  return out;
}

namespace {

Tensor icarl_loss(Graph& g, MlpModel& model, const Batch& batch, NormMode mode,
                  std::span<const int> current_classes, const TeacherSnapshot* teacher) {
  auto targets = icarl_targets(batch, current_classes, teacher, model.num_classes());
  auto out = model.forward(g, inputs_tensor(batch), mode);
  return sigmoid_bce_loss(g, out.logits, targets.targets, targets.mask);
}

}  // namespace

StepResult step_icarl(MlpModel& model, const TeacherSnapshot* teacher,
                      std::span<const int> current_classes, const IcarlBatches& batches,
                      StepContext& ctx) {
  require_current(batches.current);
  const auto& cfg = ctx.config;
  const double wd = cfg.icarl_weight_decay;
  const auto& cur = batches.current;
  Graph g;

  switch (cfg.method) {
    case Method::iCaRL: {
      auto loss = icarl_loss(g, model, cur, NormMode::train(), current_classes, teacher);
      return finish(g, loss, model, cfg.lr, wd);
    }
    case Method::iCaRL_Concat: {
      auto loss = icarl_loss(g, model, concat(cur, batches.previous), NormMode::train(),
                             current_classes, teacher);
      return finish(g, loss, model, cfg.lr, wd);
    }
    case Method::iCaRL_BNT: {
      const Batch balanced = balance(cur, batches.buffer, ctx.rng);
      ema_refresh_pass(model, inputs_tensor(balanced));
      FrozenEmaCheck frozen(model, cfg.icarl_bnt_double_update ? nullptr : ctx.audit);
      const auto mode = param_mode(cfg);
      std::optional<Tensor> buffer_term;
      if (!batches.buffer.empty()) {
        const auto b_mode = cfg.icarl_bnt_double_update ? NormMode::train() : mode;
        buffer_term = scale(g, icarl_loss(g, model, balanced, b_mode, current_classes, teacher),
                            batches.lambda);
      }
      auto loss = icarl_loss(g, model, cur, mode, current_classes, teacher);
      if (buffer_term) loss = add(g, loss, *buffer_term);
      frozen.verify();
      return finish(g, loss, model, cfg.lr, wd);
    }
    case Method::iCaRL_BNT_NoSimulator: {
      ema_refresh_pass(model, inputs_tensor(balance(cur, batches.buffer, ctx.rng)));
      FrozenEmaCheck frozen(model, ctx.audit);
      const auto mode = param_mode(cfg);
      auto loss = icarl_loss(g, model, cur, mode, current_classes, teacher);
      if (!batches.previous.empty()) {
        loss = add(g, loss,
                   scale(g, icarl_loss(g, model, batches.previous, mode, current_classes, teacher),
                         batches.lambda));
      }
      frozen.verify();
      return finish(g, loss, model, cfg.lr, wd);
    }
    case Method::iCaRL_BNT_ImbalanceTracker: {
      auto loss = icarl_loss(g, model, cur, NormMode::train(), current_classes, teacher);
      if (!batches.buffer.empty()) {
        const Batch balanced = balance(cur, batches.buffer, ctx.rng);
        loss = add(g, loss,
                   scale(g, icarl_loss(g, model, balanced, NormMode::train(), current_classes, teacher),
                         batches.lambda));
      }
      return finish(g, loss, model, cfg.lr, wd);
    }
    default:
      throw ContractError("step_icarl called for non-iCaRL method " +
                          std::string(method_name(cfg.method)));
  }
}

Learner::Learner(const ModelConfig& model_config, const StrategyConfig& strategy,
                 std::size_t buffer_capacity, std::uint64_t seed)
    : model([&] {
        std::seed_seq seq{seed, std::uint64_t{1}};
        Rng init(seq);
        return MlpModel(model_config, init);
      }()),
      buffer(buffer_capacity),
      config(strategy),
      rng([&] {
        std::seed_seq seq{seed, std::uint64_t{2}};
        return Rng(seq);
      }()) {}

namespace {

Batch without_classes(const Batch& batch, std::span<const int> classes) {
  Batch out;
  for (const auto& e : batch)
    if (std::find(classes.begin(), classes.end(), e.label) == classes.end()) out.push_back(e);
  return out;
}

void offer_all(Learner& learner, const Batch& current, const std::vector<double>& logits) {
  const std::size_t classes = learner.model.num_classes();
  for (std::size_t i = 0; i < current.size(); ++i) {
    BufferEntry entry = current[i];
    if (!logits.empty()) {
      entry.logits.emplace(logits.begin() + static_cast<long>(i * classes),
                           logits.begin() + static_cast<long>((i + 1) * classes));
    } else {
      entry.logits.reset();
    }
    learner.buffer.reservoir_offer(std::move(entry), learner.rng);
  }
}

}  // namespace

void run_task(Learner& learner, const Task& task, int epochs) {
  const auto& cfg = learner.config;
  const Method method = cfg.method;
  const std::size_t k = cfg.replay_batch_size();
  const int task_index = learner.tasks_done + 1;
  std::span<const int> classes = task.classes;
  StepContext ctx{learner.rng, cfg, &learner.audit};

  const bool icarl = is_icarl_family(method);
  double lambda = 0.0;
  if (icarl) {
    if (learner.tasks_done > 0) {
      learner.teacher = TeacherSnapshot{learner.model.clone(), learner.seen_classes};
    }
    lambda = icarl_lambda(learner.buffer.size(), task.train.size());
  }
  const TeacherSnapshot* teacher = learner.teacher ? &*learner.teacher : nullptr;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    auto batches = method == Method::iCaRL
                       ? iterate_offline_mixed(task.train, learner.buffer.entries(), cfg.batch_size,
                                               learner.rng)
                       : iterate_online(task.train, cfg.batch_size, learner.rng);
    for (const auto& current : batches) {
      StepResult result;
      switch (method) {
        case Method::SGD_only:
          result = step_sgd(learner.model, current, ctx);
          break;
        case Method::ER:
          result = step_er(learner.model, current, sample_buffer(learner.buffer, k, learner.rng), ctx);
          break;
        case Method::ER_BalanceBatch:
          result = step_er_balance_batch(learner.model, current,
                                         sample_buffer(learner.buffer, k, learner.rng), task_index, ctx);
          break;
        case Method::ER_CurBuf:
        case Method::ER_BNT_ImbalanceTracker:
          result = step_er_cur_x(learner.model, current, sample_buffer(learner.buffer, k, learner.rng), ctx);
          break;
        case Method::ER_CurPrev:
          result = step_er_cur_x(learner.model, current,
                                 sample_prev_only(learner.buffer, classes, k, learner.rng), ctx);
          break;
        case Method::ER_BNT:
          result = step_er_bnt(learner.model, current, sample_buffer(learner.buffer, k, learner.rng), ctx);
          break;
        case Method::ER_BalanceJointTrain:
          result = step_er_balance_joint_train(learner.model, current,
                                               sample_buffer(learner.buffer, k, learner.rng), ctx);
          break;
        case Method::ER_BNT_NoSimulator: {
          auto buffer_batch = sample_buffer(learner.buffer, k, learner.rng);
          auto previous = without_classes(buffer_batch, classes);
          result = step_er_bnt_no_simulator(learner.model, current, buffer_batch, previous, ctx);
          break;
        }
        case Method::DERpp: {
          auto m1 = sample_buffer(learner.buffer, k, learner.rng);
          auto m2 = sample_buffer(learner.buffer, k, learner.rng);
          result = step_derpp(learner.model, current, m1, m2, false, ctx);
          break;
        }
        case Method::DERpp_BNT:
          result = step_derpp(learner.model, current, sample_buffer(learner.buffer, k, learner.rng), {},
                              true, ctx);
          break;
        case Method::iCaRL:
          result = step_icarl(learner.model, teacher, classes, IcarlBatches{current, {}, {}, lambda}, ctx);
          break;
        case Method::iCaRL_Concat:
          result = step_icarl(learner.model, teacher, classes,
                              IcarlBatches{current, {}, sample_prev_only(learner.buffer, classes, k, learner.rng),
                                           lambda},
                              ctx);
          break;
        case Method::iCaRL_BNT:
        case Method::iCaRL_BNT_ImbalanceTracker:
          result = step_icarl(learner.model, teacher, classes,
                              IcarlBatches{current, sample_buffer(learner.buffer, k, learner.rng), {}, lambda},
                              ctx);
          break;
        case Method::iCaRL_BNT_NoSimulator: {
          auto buffer_batch = sample_buffer(learner.buffer, k, learner.rng);
          auto previous = without_classes(buffer_batch, classes);
          result = step_icarl(learner.model, teacher, classes,
                              IcarlBatches{current, std::move(buffer_batch), std::move(previous), lambda}, ctx);
          break;
        }
      }
      ++learner.steps;
      if (uses_reservoir(method)) offer_all(learner, current, result.current_logits);
    }
  }

  if (icarl) icarl_rebuild_buffer(learner.model, task.train, learner.buffer, learner.buffer.capacity());
  for (int c : task.classes)
    if (std::find(learner.seen_classes.begin(), learner.seen_classes.end(), c) == learner.seen_classes.end())
      learner.seen_classes.push_back(c);
  ++learner.tasks_done;
}

}  // namespace clbench
