#pragma once

#include <vector>

#include "blockloc/errors.hpp"
#include "blockloc/types.hpp"

namespace blockloc {

/// One transmitter-receiver pair: a single bistatic measurement channel.
struct Trp {
    int index = 0;  ///< 1-based channel index
    Point2 tx = Point2::Zero();
    Point2 rx = Point2::Zero();
};

/// Locus of constant bistatic range: an ellipse with tx and rx at the foci.
struct RangeEllipse {
    Trp trp;
    double range = 0.0;
};

/// Result of a nonlinear least-squares position fit.
struct LocationEstimate {
    Point2 point = Point2::Zero();
    Mat2 covariance = Mat2::Zero();  ///< symmetric PSD, meters^2
    double residual_norm = 0.0;      ///< L2 norm of the range residual vector
    int iterations = 0;
};

/// Sum of the distances from p to the two channel endpoints.
double bistatic_range(const Trp& trp, const Point2& p);

/// Gradient of bistatic_range with respect to p: the sum of the two unit
/// vectors pointing from the endpoints toward p.  Its norm is at most 2.
Point2 bistatic_range_gradient(const Trp& trp, const Point2& p);

/// Three-leg path length tx -> target -> scatterer -> rx.
double ip_length_target_first(const Trp& trp, const Point2& target, const Point2& scatterer);

/// Three-leg path length tx -> scatterer -> target -> rx.
double ip_length_scatterer_first(const Trp& trp, const Point2& target, const Point2& scatterer);

/// All intersection points (0..4) of two constant-range loci.  Every
/// returned point reproduces both ranges within tol; the list is
/// deduplicated within tol.
///
/// Throws DegenerateGeometry when a range does not exceed the focal
/// separation, and IdenticalTrp when both loci coincide (same endpoints and
/// equal ranges).  Co-located endpoints (monostatic channels) are handled as
/// circles.
std::vector<Point2> ellipse_intersections(const RangeEllipse& ea, const RangeEllipse& eb,
                                          double tol = 1e-9);

/// Levenberg-Marquardt fit of a position to >= 2 range observations,
/// minimizing the sum of squared range residuals from `init`.
/// covariance = sigma^2 (J^T J)^-1 at the solution.
/// Throws SingularGeometry when the normal equations are rank deficient.
LocationEstimate nls_estimate(const std::vector<RangeEllipse>& observations, const Point2& init,
                              double sigma);

/// Candidate range minus the range predicted at an estimated position.
double range_residual(const Point2& estimate, const RangeEllipse& candidate);

/// First-order standard deviation of a range residual: measurement noise
/// plus estimate uncertainty propagated through the range gradient,
/// sqrt(sigma^2 + g^T C g).
double residual_sigma(const LocationEstimate& estimate, const Trp& trp, double sigma);

}  // namespace blockloc
