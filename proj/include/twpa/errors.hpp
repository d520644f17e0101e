#pragma once

#include <stdexcept>
#include <string>

namespace twpa {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Two mix products land closer than the grid collision tolerance.
struct CollisionError : Error {
    using Error::Error;
};

/// Sampling violates the Nyquist bound for the highest grid frequency.
struct AliasError : Error {
    using Error::Error;
};

/// Bias current at or beyond the junction critical current.
struct OverCriticalError : Error {
    using Error::Error;
};

/// SNAIL cosine sum non-positive: branch is not inductive at this point.
struct NonInductiveError : Error {
    using Error::Error;
};

/// No operating point exists for the requested bias.
struct NoSolutionError : Error {
    using Error::Error;
};

/// Circuit graph is malformed (floating node, bad index, ...).
struct TopologyError : Error {
    using Error::Error;
};

/// Transient did not reach a periodic steady state within the stop time.
struct NoSteadyStateError : Error {
    using Error::Error;
};

/// Newton iteration hit the iteration cap without meeting tolerance.
struct MaxIterationsError : Error {
    using Error::Error;
};

struct SingularJacobianError : Error {
    using Error::Error;
};

/// Sweep never entered the compressed regime.
struct NotReachedError : Error {
    using Error::Error;
};

/// Run configuration is invalid (schema, units, ranges).
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace twpa
