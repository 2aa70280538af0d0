#pragma once

#include <iosfwd>
#include <string>

#include "clbench/model.hpp"
#include "clbench/replay.hpp"

namespace clbench {

/// Text checkpoint of a trained model (parameters and running statistics)
/// and its replay buffer. Values are written at 17 significant digits, so a
/// save/load round trip is exact.
void save_checkpoint(const MlpModel& model, const ReplayBuffer& buffer, std::ostream& out);
void save_checkpoint(const MlpModel& model, const ReplayBuffer& buffer, const std::string& path);

struct Checkpoint {
  MlpModel model;
  ReplayBuffer buffer;
};

Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace clbench
