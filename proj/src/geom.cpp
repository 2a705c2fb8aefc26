#include "blockloc/geom.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace blockloc {

namespace {

constexpr double kCoincident = 1e-9;  ///< below this separation, foci count as co-located

/// Real roots of sum_i c[i] x^i via the companion matrix of the trimmed
/// polynomial.  Near-real eigenvalues are admitted generously; callers
/// filter candidates by residual afterwards.
std::vector<double> poly_real_roots(std::vector<double> c) {
    double scale = 0.0;
    for (double v : c) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) return {};
    int deg = static_cast<int>(c.size()) - 1;
    while (deg > 0 && std::abs(c[deg]) < 1e-13 * scale) --deg;
    if (deg <= 0) return {};
    if (deg == 1) return {-c[0] / c[1]};
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(deg, deg);
    for (int i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
    for (int i = 0; i < deg; ++i) companion(i, deg - 1) = -c[i] / c[deg];
    Eigen::EigenSolver<Eigen::MatrixXd> es(companion, /*computeEigenvectors=*/false);
    std::vector<double> roots;
    for (int i = 0; i < deg; ++i) {
        std::complex<double> z = es.eigenvalues()[i];
        if (std::abs(z.imag()) <= 1e-6 * (1.0 + std::abs(z.real()))) roots.push_back(z.real());
    }
    return roots;
}

/// A few Newton iterations on the two-range residual system drive raw
/// algebraic candidates to machine precision.
Point2 polish_intersection(Point2 p, const RangeEllipse& ea, const RangeEllipse& eb) {
    for (int it = 0; it < 5; ++it) {
        Eigen::Vector2d f(bistatic_range(ea.trp, p) - ea.range,
                          bistatic_range(eb.trp, p) - eb.range);
        Eigen::Matrix2d j;
        j.row(0) = bistatic_range_gradient(ea.trp, p).transpose();
        j.row(1) = bistatic_range_gradient(eb.trp, p).transpose();
        double det = j.determinant();
        if (std::abs(det) < 1e-14 * (1.0 + j.norm())) break;
        p -= j.inverse() * f;
    }
    return p;
}

void check_non_degenerate(const RangeEllipse& e) {
    double focal = (e.trp.rx - e.trp.tx).norm();
    if (!(e.range > focal))
        throw DegenerateGeometry("range " + std::to_string(e.range) +
                                 " does not exceed focal separation " + std::to_string(focal));
}

bool same_point(const Point2& a, const Point2& b) { return (a - b).norm() < kCoincident; }

}  // namespace

double bistatic_range(const Trp& trp, const Point2& p) {
    return (p - trp.tx).norm() + (p - trp.rx).norm();
}

Point2 bistatic_range_gradient(const Trp& trp, const Point2& p) {
    Point2 g = Point2::Zero();
    Point2 dt = p - trp.tx;
    double nt = dt.norm();
    if (nt > 0.0) g += dt / nt;
    Point2 dr = p - trp.rx;
    double nr = dr.norm();
    if (nr > 0.0) g += dr / nr;
    return g;
}

double ip_length_target_first(const Trp& trp, const Point2& target, const Point2& scatterer) {
    return (target - trp.tx).norm() + (scatterer - target).norm() + (trp.rx - scatterer).norm();
}

double ip_length_scatterer_first(const Trp& trp, const Point2& target, const Point2& scatterer) {
    return (scatterer - trp.tx).norm() + (target - scatterer).norm() + (trp.rx - target).norm();
}

std::vector<Point2> ellipse_intersections(const RangeEllipse& ea, const RangeEllipse& eb,
                                          double tol) {
    check_non_degenerate(ea);
    check_non_degenerate(eb);

    const Point2 f1 = ea.trp.tx, f2 = ea.trp.rx;
    const Point2 g1 = eb.trp.tx, g2 = eb.trp.rx;
    const bool same_foci = (same_point(f1, g1) && same_point(f2, g2)) ||
                           (same_point(f1, g2) && same_point(f2, g1));
    if (same_foci) {
        if (std::abs(ea.range - eb.range) <= tol)
            throw IdenticalTrp("coincident loci: same endpoints and equal ranges");
        return {};  // confocal loci with different ranges never meet
    }

    const double fsep = (f2 - f1).norm();
    const double gsep = (g2 - g1).norm();

    std::vector<Point2> candidates;
    if (fsep < kCoincident && gsep < kCoincident) {
        // Both channels monostatic: circle-circle closed form.
        const Point2 pa = 0.5 * (f1 + f2), pb = 0.5 * (g1 + g2);
        const double ra = 0.5 * ea.range, rb = 0.5 * eb.range;
        const Point2 d = pb - pa;
        const double dist = d.norm();
        if (dist > ra + rb + tol || dist < std::abs(ra - rb) - tol) return {};
        const double a = (dist * dist + ra * ra - rb * rb) / (2.0 * dist);
        const double h2 = ra * ra - a * a;
        const double h = std::sqrt(std::max(0.0, h2));
        const Point2 u = d / dist;
        const Point2 n(-u.y(), u.x());
        const Point2 base = pa + a * u;
        candidates.push_back(base + h * n);
        candidates.push_back(base - h * n);
    } else {
        // Normalize to the frame of locus A: center at the origin, major
        // axis along x, so A is x^2/pa + y^2/qa = 1.
        const Point2 center = 0.5 * (f1 + f2);
        const Point2 axis = fsep < kCoincident ? Point2(1.0, 0.0) : Point2((f2 - f1) / fsep);
        const Point2 normal(-axis.y(), axis.x());
        const double semi_major = 0.5 * ea.range;
        const double c = 0.5 * fsep;
        const double pa = semi_major * semi_major;
        const double qa = pa - c * c;  // > 0 by the degeneracy check

        auto to_frame = [&](const Point2& w) {
            Point2 d = w - center;
            return Point2(axis.dot(d), normal.dot(d));
        };
        const Point2 ga = to_frame(g1), gb = to_frame(g2);
        const double rb = eb.range;

        // Conic of locus B in this frame, from squaring the two-distance
        // definition twice: (alpha x + beta y + gamma)^2 = 4 rb^2 |p - gb|^2.
        const double alpha = -2.0 * (ga.x() - gb.x());
        const double beta = -2.0 * (ga.y() - gb.y());
        const double gamma = ga.squaredNorm() - gb.squaredNorm() - rb * rb;
        const double A2 = alpha * alpha - 4.0 * rb * rb;
        const double B2 = 2.0 * alpha * beta;
        const double C2 = beta * beta - 4.0 * rb * rb;
        const double D2 = 2.0 * alpha * gamma + 8.0 * rb * rb * gb.x();
        const double E2 = 2.0 * beta * gamma + 8.0 * rb * rb * gb.y();
        const double F2 = gamma * gamma - 4.0 * rb * rb * gb.squaredNorm();

        // On A, y^2 = qa (1 - x^2/pa); substituting splits B's conic into
        // u(x) + y v(x) = 0, and eliminating y gives the resultant quartic
        // u(x)^2 - y^2(x) v(x)^2 = 0.
        const double y2_2 = -qa / pa, y2_0 = qa;
        const double u2 = A2 + C2 * y2_2;
        const double u1 = D2;
        const double u0 = C2 * y2_0 + F2;
        const double v1 = B2, v0 = E2;

        std::vector<double> coeffs(5);
        coeffs[4] = u2 * u2 - y2_2 * v1 * v1;
        coeffs[3] = 2.0 * u2 * u1 - 2.0 * y2_2 * v1 * v0;
        coeffs[2] = u1 * u1 + 2.0 * u2 * u0 - y2_2 * v0 * v0 - y2_0 * v1 * v1;
        coeffs[1] = 2.0 * u1 * u0 - 2.0 * y2_0 * v1 * v0;
        coeffs[0] = u0 * u0 - y2_0 * v0 * v0;

        const double vscale = std::abs(v1) * semi_major + std::abs(v0);
        for (double x : poly_real_roots(std::move(coeffs))) {
            const double xc = std::clamp(x, -semi_major, semi_major);
            const double y2 = y2_0 + y2_2 * xc * xc;
            if (y2 < 0.0) continue;
            const double v = v1 * xc + v0;
            std::vector<double> ys;
            if (std::abs(v) > 1e-9 * (1.0 + vscale)) {
                ys.push_back(-(u2 * xc * xc + u1 * xc + u0) / v);
            } else {
                const double yr = std::sqrt(y2);
                ys.push_back(yr);
                ys.push_back(-yr);
            }
            for (double y : ys) candidates.push_back(center + xc * axis + y * normal);
        }
    }

    std::vector<Point2> result;
    for (Point2 cand : candidates) {
        const Point2 p = polish_intersection(cand, ea, eb);
        if (std::abs(bistatic_range(ea.trp, p) - ea.range) > tol) continue;
        if (std::abs(bistatic_range(eb.trp, p) - eb.range) > tol) continue;
        bool duplicate = false;
        for (const Point2& q : result)
            if ((p - q).norm() <= tol) duplicate = true;
        if (!duplicate) result.push_back(p);
    }
    return result;
}

LocationEstimate nls_estimate(const std::vector<RangeEllipse>& observations, const Point2& init,
                              double sigma) {
    if (observations.size() < 2) throw SingularGeometry("position fit needs at least two ranges");

    auto cost = [&](const Point2& q) {
        double s = 0.0;
        for (const auto& o : observations) {
            double e = o.range - bistatic_range(o.trp, q);
            s += e * e;
        }
        return s;
    };
    auto normal_equations = [&](const Point2& q, Mat2& jtj, Point2& jte) {
        jtj.setZero();
        jte.setZero();
        for (const auto& o : observations) {
            Point2 g = bistatic_range_gradient(o.trp, q);
            double e = o.range - bistatic_range(o.trp, q);
            jtj += g * g.transpose();
            jte += g * e;
        }
    };

    Point2 p = init;
    double current = cost(p);
    double damping = 1e-3;
    int iterations = 0;
    bool converged = false;
    for (; iterations < 50 && !converged; ++iterations) {
        Mat2 jtj;
        Point2 jte;
        normal_equations(p, jtj, jte);
        bool stepped = false;
        for (int tries = 0; tries < 25; ++tries) {
            Mat2 damped = jtj + damping * Mat2::Identity();
            Point2 step = damped.llt().solve(jte);
            if (!step.allFinite()) {
                damping *= 10.0;
                continue;
            }
            Point2 candidate = p + step;
            double c = cost(candidate);
            if (c <= current) {
                p = candidate;
                current = c;
                damping = std::max(damping * 0.1, 1e-12);
                converged = step.norm() < 1e-10;
                stepped = true;
                break;
            }
            damping *= 10.0;
            if (damping > 1e12) break;
        }
        if (!stepped) break;  // no improving step exists at any damping
    }

    Mat2 jtj;
    Point2 jte;
    normal_equations(p, jtj, jte);
    Eigen::SelfAdjointEigenSolver<Mat2> es(jtj);
    const double emin = es.eigenvalues()[0], emax = es.eigenvalues()[1];
    if (!(emax > 0.0) || emin <= 1e-12 * emax)
        throw SingularGeometry("rank-deficient normal equations in position fit");

    LocationEstimate out;
    out.point = p;
    out.covariance = sigma * sigma * jtj.inverse();
    out.residual_norm = std::sqrt(current);
    out.iterations = iterations;
    return out;
}

double range_residual(const Point2& estimate, const RangeEllipse& candidate) {
    return candidate.range - bistatic_range(candidate.trp, estimate);
}

double residual_sigma(const LocationEstimate& estimate, const Trp& trp, double sigma) {
    Point2 g = bistatic_range_gradient(trp, estimate.point);
    double propagated = g.dot(estimate.covariance * g);
    return std::sqrt(sigma * sigma + std::max(0.0, propagated));
}

}  // namespace blockloc
