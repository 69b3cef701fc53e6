#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lw {

// All numerics run in double precision; weight archives store f32 (see archive.hpp).
using Real = double;

// Thrown when a training phase hits its step budget before its stop rule fires.
// Carries enough context to diagnose the run; the caller still owns the log.
class PhaseBudgetExhausted : public std::runtime_error {
public:
    PhaseBudgetExhausted(std::string phase, long steps, std::string detail)
        : std::runtime_error("phase-budget-exhausted: " + phase + " after " +
                             std::to_string(steps) + " steps (" + detail + ")"),
          phase_(std::move(phase)), steps_(steps) {}
    const std::string& phase() const { return phase_; }
    long steps() const { return steps_; }

private:
    std::string phase_;
    long steps_;
};

// Bundle used against an autoencoder it was not trained for.
class IncompatibleBundle : public std::runtime_error {
public:
    explicit IncompatibleBundle(const std::string& what)
        : std::runtime_error("incompatible-bundle: " + what) {}
};

// Archive on disk is missing entries or otherwise unreadable.
class ArchiveError : public std::runtime_error {
public:
    explicit ArchiveError(const std::string& what)
        : std::runtime_error("archive-error: " + what) {}
};

// Operation called on an object that is not in the required state
// (e.g. running a reconstruction attack with an untrained attacker).
class InvalidStateError : public std::logic_error {
public:
    explicit InvalidStateError(const std::string& what)
        : std::logic_error("invalid-state: " + what) {}
};

inline void check_arg(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace lw
