#pragma once

#include <stdexcept>
#include <string>

namespace crittime {

/// Raised when a caller breaks a documented precondition (shapes, ranges).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A set family that cannot be represented exactly by the QC constructors.
class UnsupportedShape : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InfeasibleOperatingPoint : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ContractViolation(what);
}

}  // namespace detail
}  // namespace crittime
