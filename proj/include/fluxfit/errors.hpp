#ifndef FLUXFIT_ERRORS_HPP
#define FLUXFIT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace fluxfit
{
// Base of every error raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// A physical or numerical parameter violates its domain.
class InvalidParameter : public Error
{
public:
    using Error::Error;
};

// Bad user configuration: unknown transition names, inconsistent layouts, malformed files.
class ConfigError : public Error
{
public:
    using Error::Error;
};

// A requested state label does not exist in a computed spectrum.
class LabelingError : public ConfigError
{
public:
    using ConfigError::ConfigError;
};

// Eigensolver failure, quadrature or grid non-convergence.
class NumericalError : public Error
{
public:
    using Error::Error;
};

class ConvergenceError : public NumericalError
{
public:
    ConvergenceError(const std::string &what, double last_delta)
        : NumericalError(what), last_delta_(last_delta)
    {
    }
    double last_delta() const noexcept { return last_delta_; }

private:
    double last_delta_;
};

// A linewidth fit that converged to something not worth reporting.
class UnreliableFit : public NumericalError
{
public:
    using NumericalError::NumericalError;
};

// Malformed input file; carries the 1-based row when known.
class ParseError : public ConfigError
{
public:
    ParseError(const std::string &what, std::size_t row = 0) : ConfigError(what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

} // namespace fluxfit

#endif // FLUXFIT_ERRORS_HPP
