#ifndef ACFLOW_ERRORS_HPP
#define ACFLOW_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace acflow {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition; the message names the inequality.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Field values left the interval where the potentials are defined.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Geometry does not fit the box (margins, resolution).
class GeometryError : public DomainError {
public:
    using DomainError::DomainError;
};

/// int V'(u)^2 vanished; the multiplier is undefined.
class DegenerateDenominator : public Error {
public:
    explicit DegenerateDenominator(double denom)
        : Error("degenerate multiplier denominator: int V'(u)^2 = " + std::to_string(denom)),
          denominator(denom) {}
    double denominator;
};

/// Iterative solver failed; message carries the last residuals.
class NonConvergence : public Error {
public:
    using Error::Error;
};

/// epsilon too large relative to m^{1/n} for the radial solver.
class RegimeViolation : public DomainError {
public:
    using DomainError::DomainError;
};

/// Scalar volume correction did not converge.
class VolumeFixFailure : public Error {
public:
    using Error::Error;
};

} // namespace acflow

#endif
