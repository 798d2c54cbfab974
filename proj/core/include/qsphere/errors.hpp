/// @file errors.hpp
/// @brief Error taxonomy shared by the library and the command-line tool.
///
/// Each exception class corresponds to one process exit status of the
/// `qsphere` tool, so library failures map onto a stable CLI contract:
///   ConfigError     -> exit 2 (unreadable / invalid configuration)
///   HypothesisError -> exit 3 (a hard admissibility hypothesis fails)
///   NumericsError   -> exit 4 (positivity loss, non-finite values, no
///                              stable step)
///   AuditError      -> exit 5 (a hard post-run audit fails)
#pragma once

#include <stdexcept>
#include <string>

namespace qsphere {

/// Base class for all qsphere errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Configuration could not be parsed or validated (CLI exit status 2).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

/// A hard mathematical hypothesis fails for the supplied data, so the run
/// would be meaningless (CLI exit status 3).  Example: the parabolicity
/// factor 1/t + df/dt loses positivity, or a horizon run's sign condition
/// fails on the initial leaf.
class HypothesisError : public Error {
public:
    explicit HypothesisError(const std::string& what) : Error(what) {}
};

/// Numerical failure during time integration (CLI exit status 4).
class NumericsError : public Error {
public:
    explicit NumericsError(const std::string& what) : Error(what) {}
};

/// A hard audit on a completed run fails (CLI exit status 5).
class AuditError : public Error {
public:
    explicit AuditError(const std::string& what) : Error(what) {}
};

} // namespace qsphere
