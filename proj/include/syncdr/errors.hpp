#pragma once

#include <stdexcept>
#include <string>

namespace syncdr {

// Error taxonomy shared by every module. The CLI maps each family to a
// distinct exit code.

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

struct AlignmentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct LookupError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct DegenerateInputError : std::domain_error {
  using std::domain_error::domain_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace syncdr
