#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clbench/data.hpp"
#include "clbench/model.hpp"
#include "clbench/replay.hpp"
#include "clbench/scenario.hpp"

namespace clbench {

enum class Method {
  SGD_only,
  ER,
  ER_BalanceBatch,
  ER_CurBuf,
  ER_CurPrev,
  ER_BNT,
  ER_BalanceJointTrain,
  ER_BNT_NoSimulator,
  ER_BNT_ImbalanceTracker,
  DERpp,
  DERpp_BNT,
  iCaRL,
  iCaRL_Concat,
  iCaRL_BNT,
  iCaRL_BNT_NoSimulator,
  iCaRL_BNT_ImbalanceTracker,
};

std::string_view method_name(Method method);
Method parse_method(std::string_view name);  // throws ConfigError
std::span<const Method> all_methods();

bool is_icarl_family(Method method);
bool is_derpp_family(Method method);
bool uses_reservoir(Method method);

/// Statistics that normalize the parameter-update forwards of BN-Tricks
/// steps. The EMA is frozen either way.
enum class BntParamStats { BatchMoments, RunningEma };

struct StrategyConfig {
  Method method = Method::ER;
  double lr = 0.03;
  std::size_t batch_size = 32;
  std::size_t buffer_batch_size = 0;  // 0 means batch_size
  double derpp_alpha = 0.2;
  double derpp_beta = 0.5;
  double icarl_weight_decay = 1e-4;
  BntParamStats bnt_param_stats = BntParamStats::BatchMoments;
  // iCaRL-BNT: compute L_b under (BatchMoments, Update), refreshing the EMA
  // a second time in the same step.
  bool icarl_bnt_double_update = false;

  std::size_t replay_batch_size() const { return buffer_batch_size ? buffer_batch_size : batch_size; }
  bool operator==(const StrategyConfig&) const = default;
};

/// Counts frozen-EMA checks in BN-Tricks steps: running statistics right
/// after the EMA refresh must equal those after the parameter-update
/// forwards.
struct FrozenEmaAudit {
  std::size_t checks = 0;
  std::size_t violations = 0;
};

struct StepContext {
  Rng& rng;
  const StrategyConfig& config;
  FrozenEmaAudit* audit = nullptr;
};

struct StepResult {
  double loss = 0.0;
  // Logits of the current batch from its training forward, row-major; only
  // filled by DER++ steps, which store them with the buffer entries.
  std::vector<double> current_logits;
};

/// Frozen model copy taken at a task boundary (parameters and EMA).
struct TeacherSnapshot {
  mutable MlpModel model;  // only ever run in inference mode
  std::vector<int> seen_classes;  // classes of all earlier tasks
};

StepResult step_sgd(MlpModel& model, const Batch& current, StepContext& ctx);

/// Concatenated forward of current + buffer batch, (BatchMoments, Update),
/// mean CE over the concatenation.
StepResult step_er(MlpModel& model, const Batch& current, const Batch& buffer_batch,
                   StepContext& ctx);

/// Forwards current + (task_index - 1) copies of the buffer batch. Each
/// copied entry carries 1/(task_index - 1) of its ER loss weight, so only
/// the BN moments differ from ER. task_index is 1-based.
StepResult step_er_balance_batch(MlpModel& model, const Batch& current, const Batch& buffer_batch,
                                 int task_index, StepContext& ctx);

/// Separate (BatchMoments, Update) forwards of current and `other`; the EMA
/// moves once per non-empty batch. Loss = CE(current) + CE(other).
StepResult step_er_cur_x(MlpModel& model, const Batch& current, const Batch& other,
                         StepContext& ctx);

/// BN Tricks for ER: EMA refreshed on balance(current, buffer_batch) only,
/// then CE(current) + CE(buffer_batch) with the EMA frozen.
StepResult step_er_bnt(MlpModel& model, const Batch& current, const Batch& buffer_batch,
                       StepContext& ctx);

/// EMA from the balanced batch; parameters from the concatenated batch and
/// the buffer batch.
StepResult step_er_balance_joint_train(MlpModel& model, const Batch& current,
                                       const Batch& buffer_batch, StepContext& ctx);

/// EMA from balance(current, buffer_batch); parameters from current and
/// `previous` (buffer samples of earlier tasks only).
StepResult step_er_bnt_no_simulator(MlpModel& model, const Batch& current,
                                    const Batch& buffer_batch, const Batch& previous,
                                    StepContext& ctx);

/// CE(B_t) + alpha * MSE(logits(B_M1), stored) + beta * CE(B_M2).
/// With bnt = true, B_M1 serves both buffer terms and the BN-Tricks EMA
/// discipline applies; B_M2 is ignored.
StepResult step_derpp(MlpModel& model, const Batch& current, const Batch& buffer_m1,
                      const Batch& buffer_m2, bool bnt, StepContext& ctx);

struct IcarlBatches {
  Batch current;   // B_t, or B_t_mix for plain iCaRL
  Batch buffer;    // B_M
  Batch previous;  // B_p
  double lambda = 0.0;
};

/// One iCaRL-family step; the variant comes from ctx.config.method.
StepResult step_icarl(MlpModel& model, const TeacherSnapshot* teacher,
                      std::span<const int> current_classes, const IcarlBatches& batches,
                      StepContext& ctx);

/// Sigmoid-BCE targets: one-hot on current classes, teacher sigmoid outputs
/// on earlier classes, and a mask that drops classes not seen yet.
struct IcarlTargets {
  Tensor targets;
  std::vector<std::uint8_t> mask;
};
IcarlTargets icarl_targets(const Batch& batch, std::span<const int> current_classes,
                           const TeacherSnapshot* teacher, std::size_t num_classes);

/// |M| / |T_t|.
double icarl_lambda(std::size_t buffer_size, std::size_t task_size);

/// Everything one training run carries from task to task.
struct Learner {
  Learner(const ModelConfig& model_config, const StrategyConfig& strategy,
          std::size_t buffer_capacity, std::uint64_t seed);

  MlpModel model;
  ReplayBuffer buffer;
  StrategyConfig config;
  Rng rng;
  std::optional<TeacherSnapshot> teacher;
  std::vector<int> seen_classes;
  int tasks_done = 0;
  std::size_t steps = 0;
  FrozenEmaAudit audit;
};

/// Trains one task for `epochs` passes: per-batch steps plus buffer upkeep
/// (reservoir offers per batch, or a herding rebuild after the task for the
/// iCaRL family, whose teacher is snapshotted before the task).
void run_task(Learner& learner, const Task& task, int epochs);

}  // namespace clbench
