#pragma once

#include <stdexcept>
#include <string>

namespace climbing {

// Malformed input files or rows.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Arguments or datasets that violate a precondition.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Preprocessing or simulation removed every ascent.
class EmptyDatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical failure inside the optimizer (singular Hessian and the like).
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace climbing
