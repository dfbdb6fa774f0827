#pragma once

#include <stdexcept>
#include <string>

namespace rpf {

// Invalid user-supplied configuration (scenario file, CLI flags, model setup).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (e.g. an unnormalized ensemble).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Every particle weight is zero after an update.
class WeightCollapse : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A model produced an inconsistent value (negative scale, density out of range).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Both hypotheses assign zero density, so their ratio is undefined.
class UndefinedRatio : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed or incomplete input data (measurement logs, labels, shapes).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rpf
