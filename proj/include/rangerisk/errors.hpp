#pragma once

#include <stdexcept>
#include <string>

namespace rangerisk {

// Parameter/model violations (bad ranges, moment conditions, singular
// matrices). The CLI maps these to exit code 2.
class DomainError : public std::runtime_error {
public:
    DomainError(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    // Stable machine-readable identifier, e.g. "degenerate-range".
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

// Numerical integration could not reach the requested tolerance. Carries the
// best estimate so callers can decide whether to use it. CLI exit code 3.
class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, double best_estimate, double abs_error)
        : std::runtime_error(what), best_estimate_(best_estimate), abs_error_(abs_error) {}

    double best_estimate() const { return best_estimate_; }
    double abs_error() const { return abs_error_; }

private:
    double best_estimate_;
    double abs_error_;
};

}  // namespace rangerisk
