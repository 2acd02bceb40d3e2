#pragma once

#include <stdexcept>
#include <string>

namespace gavs {

// Incompatible tensor extents. Messages name the offending shapes.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller violated an operation precondition (non-scalar loss, T mismatch, ...).
class ContractError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration values or combinations.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// NaN/Inf detected while finite checking is on, or a NaN loss during training.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gavs
