#pragma once

#include <stdexcept>

namespace clbench {

/// Operand shapes do not conform.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an operation's contract (illegal mode, non-scalar loss,
/// empty input where data is required, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A value outside an operation's domain (negative variance, BCE targets
/// outside [0,1]).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class LabelError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Invalid experiment, stream or strategy configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace clbench
