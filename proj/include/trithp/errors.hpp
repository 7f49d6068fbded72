#pragma once

#include <stdexcept>
#include <string>

namespace trithp {

/// Operand shapes do not agree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A softmax row has no unmasked entry.
class InvalidMaskError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid hyperparameter or configuration value.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// API misuse, e.g. calling backward on a non-scalar.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed or invalid input data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A NaN or infinity showed up where a finite value was required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace trithp
