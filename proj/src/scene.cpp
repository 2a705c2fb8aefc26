#include "blockloc/scene.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "blockloc/errors.hpp"

namespace blockloc {

namespace {

constexpr int kPlacementAttempts = 10000;

/// Uniform point on the region with every scatterer disk excluded.
Point2 sample_clear_point(const Region& region, const std::vector<Scatterer>& scatterers,
                          Rng& rng) {
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
        Point2 p = region.sample(rng);
        bool clear = true;
        for (const auto& s : scatterers) {
            if ((p - s.center).norm() < s.radius()) {
                clear = false;
                break;
            }
        }
        if (clear) return p;
    }
    throw PlacementFailure("could not place a point outside all obstacles after " +
                           std::to_string(kPlacementAttempts) + " attempts");
}

/// Nearest point of the scatterer's boundary to `from` (its center when
/// `from` lies inside the disk).
Point2 surface_point(const Scatterer& s, const Point2& from) {
    Point2 d = from - s.center;
    double n = d.norm();
    if (n <= s.radius()) return s.center;
    return s.center + (s.radius() / n) * d;
}

}  // namespace

NodePair trp_nodes(int trp_index, int num_tx) {
    if (trp_index < 1 || num_tx < 1) throw std::out_of_range("channel index must be >= 1");
    return NodePair{1 + (trp_index - 1) % num_tx, 1 + (trp_index - 1) / num_tx};
}

Trp Network::trp(int index) const {
    const int m_tx = static_cast<int>(txs.size());
    if (index < 1 || index > num_trps()) throw std::out_of_range("channel index out of range");
    NodePair np = trp_nodes(index, m_tx);
    return Trp{index, txs[np.tx - 1], rxs[np.rx - 1]};
}

Trp Scene::trp(int index) const { return network().trp(index); }

bool line_of_sight(const Point2& p, const Point2& q, const std::vector<Scatterer>& scatterers) {
    const Point2 d = q - p;
    const double len = d.norm();
    for (const auto& s : scatterers) {
        const double half = s.radius();
        if (len == 0.0) {
            if ((s.center - p).norm() < half) return false;
            continue;
        }
        const Point2 u = d / len;
        const Point2 rel = s.center - p;
        const double along = rel.dot(u);
        if (along < 0.0 || along > len) continue;  // outside the segment's span
        const double perp = std::abs(rel.x() * u.y() - rel.y() * u.x());
        if (perp < half) return false;
    }
    return true;
}

Scene sample_scene(const SceneConfig& cfg, Rng& rng) {
    Scene scene;
    scene.region = cfg.region;
    scene.r_obs = cfg.r_obs > 0.0 ? cfg.r_obs : 2.0 * cfg.region.diagonal();

    auto place_group = [&](const std::vector<Point2>& fixed, int count) {
        std::vector<Point2> out;
        if (!fixed.empty()) {
            out = fixed;  // prescribed positions are used verbatim
        } else {
            out.reserve(count);
            for (int i = 0; i < count; ++i)
                out.push_back(sample_clear_point(cfg.region, scene.scatterers, rng));
        }
        return out;
    };

    if (cfg.placement == ScatterPlacement::poisson_field) {
        std::poisson_distribution<int> count_dist(cfg.intensity * cfg.region.area());
        const int count = count_dist(rng);
        scene.scatterers.reserve(count);
        for (int i = 0; i < count; ++i)
            scene.scatterers.push_back(Scatterer{cfg.region.sample(rng), cfg.diameter});
        scene.txs = place_group(cfg.fixed_txs, cfg.num_tx);
        scene.rxs = place_group(cfg.fixed_rxs, cfg.num_rx);
        scene.targets = place_group(cfg.fixed_targets, cfg.num_targets);
    } else {
        // Per-segment placement: nodes and targets first, then one obstacle
        // dropped onto each node-target segment that independently fails its
        // clearance draw.  Obstacle centers keep a diameter of clearance
        // from both endpoints so nodes and targets stay outside every disk.
        scene.txs = place_group(cfg.fixed_txs, cfg.num_tx);
        scene.rxs = place_group(cfg.fixed_rxs, cfg.num_rx);
        scene.targets = place_group(cfg.fixed_targets, cfg.num_targets);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        auto maybe_block = [&](const Point2& node, const Point2& target) {
            if (unit(rng) < cfg.p_los) return;
            const double len = (target - node).norm();
            double lo = cfg.diameter / len, hi = 1.0 - cfg.diameter / len;
            double frac = lo < hi ? lo + (hi - lo) * unit(rng) : 0.5;
            scene.scatterers.push_back(
                Scatterer{node + frac * (target - node), cfg.diameter});
        };
        for (const Point2& t : scene.targets) {
            for (const Point2& n : scene.txs) maybe_block(n, t);
            for (const Point2& n : scene.rxs) maybe_block(n, t);
        }
    }
    return scene;
}

GroundTruth ground_truth_blocking(const Scene& scene) {
    const int m_tx = static_cast<int>(scene.txs.size());
    const int m_rx = static_cast<int>(scene.rxs.size());
    const int t_count = static_cast<int>(scene.targets.size());
    const int i_count = m_tx * m_rx;

    GroundTruth truth;
    truth.v.resize(m_tx, t_count);
    truth.w.resize(m_rx, t_count);
    truth.k.resize(i_count, t_count);
    for (int t = 0; t < t_count; ++t) {
        for (int j = 0; j < m_tx; ++j)
            truth.v(j, t) = line_of_sight(scene.txs[j], scene.targets[t], scene.scatterers);
        for (int j = 0; j < m_rx; ++j)
            truth.w(j, t) = line_of_sight(scene.rxs[j], scene.targets[t], scene.scatterers);
        for (int i = 1; i <= i_count; ++i) {
            NodePair np = trp_nodes(i, m_tx);
            truth.k(i - 1, t) = truth.v(np.tx - 1, t) * truth.w(np.rx - 1, t);
        }
    }
    return truth;
}

void ground_truth_ips(const Scene& scene, GroundTruth& truth, IpPolicy policy, double p_ip,
                      Rng& rng) {
    const int i_count = scene.num_trps();
    const int m_count = static_cast<int>(scene.scatterers.size());
    const int t_count = static_cast<int>(scene.targets.size());
    truth.g.assign(t_count, Eigen::MatrixXi::Zero(i_count, m_count));
    truth.h.assign(t_count, Eigen::MatrixXi::Zero(i_count, m_count));
    if (policy == IpPolicy::none || m_count == 0) return;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int t = 0; t < t_count; ++t) {
        const Point2& target = scene.targets[t];
        for (int m = 0; m < m_count; ++m) {
            const Scatterer& sc = scene.scatterers[m];
            // One bounce draw per (scatterer, target, path order), shared by
            // all channels: whether the scatterer actually produces a
            // specular return for this target is a property of the map.
            const bool bounce_tf = unit(rng) < p_ip;
            const bool bounce_sf = unit(rng) < p_ip;
            const bool middle_leg =
                line_of_sight(target, surface_point(sc, target), scene.scatterers);
            if (!middle_leg) continue;
            for (int i = 1; i <= i_count; ++i) {
                Trp trp = scene.trp(i);
                if (bounce_tf && line_of_sight(trp.tx, target, scene.scatterers) &&
                    line_of_sight(surface_point(sc, trp.rx), trp.rx, scene.scatterers))
                    truth.g[t](i - 1, m) = 1;
                if (bounce_sf && line_of_sight(trp.tx, surface_point(sc, trp.tx), scene.scatterers) &&
                    line_of_sight(target, trp.rx, scene.scatterers))
                    truth.h[t](i - 1, m) = 1;
            }
        }
    }
}

}  // namespace blockloc
