#pragma once

#include <stdexcept>
#include <string>

namespace lzdiss {

/// Base class of all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Adaptive quadrature did not reach its tolerance.
class QuadratureError : public Error {
public:
    QuadratureError(const std::string& what, double achieved_error)
        : Error(what + " (achieved error estimate " + std::to_string(achieved_error) + ")"),
          achieved_error_(achieved_error) {}

    double achieved_error() const noexcept { return achieved_error_; }

private:
    double achieved_error_;
};

/// ODE step size underflow, non-convergence in t_max, numerical blow-up.
class IntegrationError : public Error {
public:
    using Error::Error;
};

/// A run would exceed the configured memory or refinement budget.
class BudgetError : public Error {
public:
    using Error::Error;
};

/// Invalid parameters or configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace lzdiss
