#pragma once

#include <stdexcept>
#include <string>

namespace mfill {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument values detected before a run starts.
struct ConfigError : Error {
    using Error::Error;
};

/// Bandwidth violates the single-reflection bound h < min_i(upper_i - lower_i).
struct BandwidthTooLarge : Error {
    using Error::Error;
};

/// The m-dimensional Jacobian came out non-finite or non-positive.
struct NonFiniteJacobian : Error {
    using Error::Error;
};

/// Two ensemble members map to the identical image point (k-NN radius 0).
struct DuplicateImages : Error {
    using Error::Error;
};

/// Every resampling weight vanished: the target has no mass on the sampled region.
struct AllZeroWeights : Error {
    using Error::Error;
};

/// Acceptance-rejection exceeded its rejection budget; usually a misconfigured
/// truncation level.
struct StallGuard : Error {
    using Error::Error;
};

/// Two sample sets that must have equal sizes/dimensions do not.
struct SizeMismatch : Error {
    using Error::Error;
};

/// Input exceeds a hard size guard (e.g. exact transport above 4096 points).
struct TooLarge : Error {
    using Error::Error;
};

/// ODE integration hit the time cap before the steady-state test was met.
struct NoSteadyState : Error {
    using Error::Error;
};

} // namespace mfill
