#pragma once

#include <stdexcept>
#include <string>

namespace blockloc {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A constant-range locus is empty or collapses to a segment
/// (range not greater than the focal separation).
struct DegenerateGeometry : Error {
    using Error::Error;
};

/// Two channels share the same endpoints and range: their loci coincide and
/// the intersection is a continuum rather than a finite point set.
struct IdenticalTrp : Error {
    using Error::Error;
};

/// The normal equations of a position fit are rank deficient
/// (e.g. collinear degenerate layouts).
struct SingularGeometry : Error {
    using Error::Error;
};

/// A covariance matrix is not invertible even after regularization.
struct SingularCovariance : Error {
    using Error::Error;
};

/// Rejection sampling of a node/target position exhausted its attempt budget
/// (region nearly covered by obstacles).
struct PlacementFailure : Error {
    using Error::Error;
};

/// An operation that requires a structurally consistent indicator vector was
/// given an inconsistent one.
struct InconsistentVector : Error {
    using Error::Error;
};

/// An exhaustive-search problem instance exceeds the configured size guard.
struct InstanceTooLarge : Error {
    using Error::Error;
};

/// Invalid, unknown or missing configuration input.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace blockloc
