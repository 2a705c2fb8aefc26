#pragma once

#include <vector>

#include "blockloc/geom.hpp"
#include "blockloc/types.hpp"

namespace blockloc {

/// Axis-aligned rectangular region of the plane.
struct Region {
    double xmin = -10.0, xmax = 10.0, ymin = -10.0, ymax = 10.0;

    double width() const { return xmax - xmin; }
    double height() const { return ymax - ymin; }
    double area() const { return width() * height(); }
    double diagonal() const { return std::hypot(width(), height()); }
    bool contains(const Point2& p) const {
        return p.x() >= xmin && p.x() <= xmax && p.y() >= ymin && p.y() <= ymax;
    }
    Point2 sample(Rng& rng) const {
        std::uniform_real_distribution<double> ux(xmin, xmax), uy(ymin, ymax);
        double x = ux(rng), y = uy(rng);
        return {x, y};
    }
};

/// Circular obstacle: a disk of the given diameter.
struct Scatterer {
    Point2 center = Point2::Zero();
    double diameter = 0.0;

    double radius() const { return 0.5 * diameter; }
};

/// How scatterers are placed when sampling a scene.
///  - poisson_field: count ~ Poisson(intensity * area), centers uniform.
///  - per_segment:   for each node-target segment independently, with
///                   probability 1 - p_los drop one small obstacle onto the
///                   segment (uniform along it, kept clear of the endpoints).
enum class ScatterPlacement { poisson_field, per_segment };

struct SceneConfig {
    Region region{};
    double intensity = 0.0075;    ///< mean scatterer count per unit area
    double diameter = 5.0;        ///< obstacle diameter, meters
    int num_tx = 3;
    int num_rx = 3;
    int num_targets = 2;
    double r_obs = 0.0;           ///< observable range limit; 0 -> 2 x region diagonal
    std::vector<Point2> fixed_txs;      ///< empty -> drawn uniformly
    std::vector<Point2> fixed_rxs;
    std::vector<Point2> fixed_targets;
    ScatterPlacement placement = ScatterPlacement::poisson_field;
    double p_los = 0.9;           ///< per_segment only: chance a segment stays clear
};

/// The node geometry visible to the inference side: transmitter and
/// receiver positions, and the induced channel list.
///
/// Channel index i (1-based) maps to transmitter 1 + (i-1) mod M_TX and
/// receiver 1 + floor((i-1) / M_TX): transmitters cycle fastest.
struct Network {
    std::vector<Point2> txs;
    std::vector<Point2> rxs;

    int num_trps() const { return static_cast<int>(txs.size() * rxs.size()); }
    Trp trp(int index) const;  ///< 1-based; throws std::out_of_range
};

/// 1-based (transmitter, receiver) indices of a channel.
struct NodePair {
    int tx = 0;
    int rx = 0;
};

/// Maps a 1-based channel index to its node indices (transmitters cycle
/// fastest).  Throws std::out_of_range for indices outside 1..num_tx*num_rx
/// (num_rx unknown here, so only the lower bound and tx range are checked by
/// callers with the full context).
NodePair trp_nodes(int trp_index, int num_tx);

/// A sampled ground-truth world.
struct Scene {
    Region region{};
    std::vector<Point2> txs;
    std::vector<Point2> rxs;
    std::vector<Point2> targets;
    std::vector<Scatterer> scatterers;
    double r_obs = 0.0;

    int num_trps() const { return static_cast<int>(txs.size() * rxs.size()); }
    Trp trp(int index) const;  ///< 1-based
    Network network() const { return Network{txs, rxs}; }
};

/// True iff the open corridor of the given width around segment pq contains
/// no scatterer center: a center blocks when its projection falls inside the
/// segment's span and its perpendicular distance is strictly below half the
/// scatterer's diameter.
bool line_of_sight(const Point2& p, const Point2& q, const std::vector<Scatterer>& scatterers);

/// Samples a world: scatterers first, then nodes and targets rejection-
/// sampled uniformly on the region minus the scatterer disks (fixed
/// positions, when provided, are used verbatim).  Throws PlacementFailure
/// when rejection sampling exhausts its attempt budget.
Scene sample_scene(const SceneConfig& cfg, Rng& rng);

/// Whether indirect (one-bounce) paths exist, and how.
enum class IpPolicy { none, geometric };

/// Ground-truth visibility indicators for each target.
///   v(j,t): tx j  <-> target t leg unobstructed
///   w(j,t): rx j  <-> target t leg unobstructed
///   k(i,t) = v(i_T,t) * w(i_R,t): both legs of channel i clear
///   g[t](i,m): a bounce path tx_i -> target t -> scatterer m -> rx_i exists
///   h[t](i,m): a bounce path tx_i -> scatterer m -> target t -> rx_i exists
struct GroundTruth {
    Eigen::MatrixXi k;  ///< I x T
    Eigen::MatrixXi v;  ///< M_TX x T
    Eigen::MatrixXi w;  ///< M_RX x T
    std::vector<Eigen::MatrixXi> g;  ///< per target: I x M
    std::vector<Eigen::MatrixXi> h;  ///< per target: I x M
};

/// Computes v, w and k from line-of-sight tests (g and h are left empty).
GroundTruth ground_truth_blocking(const Scene& scene);

/// Fills g and h.  Under the geometric policy, a bounce path exists when all
/// three legs have line of sight (legs touching a scatterer run to its
/// nearest surface point) and a Bernoulli(p_ip) draw, shared by all channels
/// for a given (scatterer, target, path order), succeeds.
void ground_truth_ips(const Scene& scene, GroundTruth& truth, IpPolicy policy, double p_ip,
                      Rng& rng);

}  // namespace blockloc
