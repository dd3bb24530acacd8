#pragma once

#include <stdexcept>
#include <string>

namespace ferro {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// Input outside the admissible set (e.g. a density outside [0,1]).
class IllPosed : public Error {
public:
    using Error::Error;
};

class InfeasibleVolume : public Error {
public:
    using Error::Error;
};

/// An indicator field whose column is not of the form 1..1 0..0.
class NotAGraph : public Error {
public:
    NotAGraph(const std::string& what, long column) : Error(what), column_(column) {}
    long column() const noexcept { return column_; }

private:
    long column_;
};

/// Iteration cap reached. Solver-specific subclasses carry the best iterate.
class NonConvergence : public Error {
public:
    using Error::Error;
};

} // namespace ferro
