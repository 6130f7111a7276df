#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace skinfit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An index (vertex, bone, frame) outside the valid range.
class IndexError : public Error {
public:
    using Error::Error;
};

/// Two inputs whose dimensions do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A value or structure violates a documented invariant.
class InvariantError : public Error {
public:
    using Error::Error;
};

/// Input for which the requested quantity is undefined (static animation,
/// zero-area face, all-zero probability row, ...).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// Malformed text or binary file content.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Non-fatal conditions collected while running a computation. Callers pass
/// a pointer when they care; nullptr silences them.
struct Diagnostics {
    std::vector<std::string> warnings;

    void warn(std::string message) { warnings.push_back(std::move(message)); }
    bool empty() const { return warnings.empty(); }
};

inline void warn(Diagnostics* diag, std::string message) {
    if (diag != nullptr) diag->warn(std::move(message));
}

}  // namespace skinfit
