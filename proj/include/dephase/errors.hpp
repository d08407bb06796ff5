// errors.hpp - exception types shared by the dephase library

#pragma once

#include <stdexcept>
#include <string>

namespace dephase {

// Invalid parameters or inputs. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Adaptive quadrature exhausted its interval budget before meeting tolerance.
class QuadratureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A coherence curve whose tail is not exponential, or that lacks enough points
// in the fit window.
class FitRejected : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Every optimizer start of a spectrum fit ended above the residual threshold.
// The CLI maps this to exit code 4.
class FitFailure : public std::runtime_error {
public:
    FitFailure(const std::string& what, double best_residual)
        : std::runtime_error(what), best_residual_(best_residual) {}
    double best_residual() const noexcept { return best_residual_; }

private:
    double best_residual_;
};

} // namespace dephase
