#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sepcov {

// Base for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- spectral measures ----

class EmptyList : public Error {
public:
    using Error::Error;
};

class NonFiniteKernel : public Error {
public:
    using Error::Error;
};

// ---- fixed-point solver ----

class NoConvergence : public Error {
public:
    NoConvergence(double residual_, long iterations_)
        : Error("fixed-point iteration did not reach tolerance: residual="
                + std::to_string(residual_) + " after "
                + std::to_string(iterations_) + " iterations"),
          residual(residual_), iterations(iterations_) {}
    double residual;
    long iterations;
};

// Iterates escaped the half-plane constraints that pin the analytic branch
// and damping reductions could not recover.
class LeftSolutionSet : public Error {
public:
    using Error::Error;
};

class DomainViolation : public Error {
public:
    using Error::Error;
};

// ---- contours and quadrature ----

class ContourTooTight : public Error {
public:
    using Error::Error;
};

class BranchCutCrossing : public Error {
public:
    using Error::Error;
};

class NonConvergedQuadrature : public Error {
public:
    using Error::Error;
};

// ---- fluctuation (CLT) layer ----

class DegenerateDenominator : public Error {
public:
    using Error::Error;
};

class CoincidentPoints : public Error {
public:
    using Error::Error;
};

class OverlappingContours : public Error {
public:
    using Error::Error;
};

// Two-point kernel hit modulus >= 1, the principal log is no longer valid.
class BranchViolation : public Error {
public:
    using Error::Error;
};

// ---- simulation ----

class EigenFailure : public Error {
public:
    using Error::Error;
};

// ---- configuration / CLI ----

class ConfigError : public Error {
public:
    using Error::Error;
};

// Collects per-point failures from batch operations so one bad point does
// not discard the rest of a sweep.
class BatchError : public Error {
public:
    struct Item {
        std::size_t index;
        std::string message;
    };

    BatchError(std::string context, std::vector<Item> items_)
        : Error(std::move(context) + ": " + std::to_string(items_.size())
                + " point(s) failed, first at index "
                + std::to_string(items_.empty() ? 0 : items_.front().index)),
          items(std::move(items_)) {}

    std::vector<Item> items;
};

} // namespace sepcov
