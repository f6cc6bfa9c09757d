#pragma once

#include <stdexcept>
#include <string>

namespace qdetect {

/// Invalid parameters supplied to a detector, estimator or command.
class config_error : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the domain of a density or closed-form expression.
class domain_error : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Precondition of a primitive update was violated by the caller.
class contract_violation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// A conditional estimate was requested but the conditioning event never occurred.
class undefined_conditional : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace qdetect
