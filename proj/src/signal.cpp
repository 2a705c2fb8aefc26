#include "blockloc/signal.hpp"

#include <algorithm>

namespace blockloc {

namespace {

/// Gaussian draw confined to [lo, hi]: redraw up to 100 times, then clamp.
double truncated_normal(double mean, double sigma, double lo, double hi, Rng& rng) {
    std::normal_distribution<double> dist(mean, sigma);
    for (int attempt = 0; attempt < 100; ++attempt) {
        const double x = dist(rng);
        if (x >= lo && x <= hi) return x;
    }
    return std::clamp(mean, lo, hi);
}

}  // namespace

std::vector<int> MpcSet::counts() const {
    std::vector<int> out;
    out.reserve(per_trp.size());
    for (const auto& list : per_trp) out.push_back(static_cast<int>(list.size()));
    return out;
}

int MpcSet::total() const {
    int n = 0;
    for (const auto& list : per_trp) n += static_cast<int>(list.size());
    return n;
}

std::vector<Mpc> merge_unresolvable(std::vector<Mpc> sorted, double threshold) {
    std::vector<Mpc> out;
    for (Mpc& peak : sorted) {
        if (!out.empty() && peak.range - out.back().range <= threshold) {
            Mpc& kept = out.back();
            if (kept.label.kind != MpcKind::merged) {
                MpcLabel combined;
                combined.kind = MpcKind::merged;
                combined.parts.push_back(kept.label);
                kept.label = std::move(combined);
            }
            kept.label.parts.push_back(std::move(peak.label));
        } else {
            out.push_back(std::move(peak));
        }
    }
    return out;
}

MpcSet generate_mpcs(const Scene& scene, const GroundTruth& truth, const SignalParams& params,
                     Rng& rng) {
    MpcSet set;
    set.num_trps = scene.num_trps();
    set.r_obs = scene.r_obs;
    set.sigma = params.sigma;
    set.resolution = params.resolution > 0.0 ? params.resolution : 2.0 * params.sigma;
    set.per_trp.resize(set.num_trps);

    const int t_count = static_cast<int>(scene.targets.size());
    const int m_count = static_cast<int>(scene.scatterers.size());
    std::poisson_distribution<int> noise_count(params.noise_rate);
    std::uniform_real_distribution<double> noise_range(0.0, set.r_obs);

    for (int i = 1; i <= set.num_trps; ++i) {
        const Trp trp = scene.trp(i);
        std::vector<Mpc>& peaks = set.per_trp[i - 1];

        auto emit = [&](double true_length, MpcLabel label) {
            if (true_length > set.r_obs) return;  // beyond the observation window
            const double r = truncated_normal(true_length, params.sigma, 0.0, set.r_obs, rng);
            peaks.push_back(Mpc{r, std::move(label)});
        };

        for (int t = 0; t < t_count; ++t) {
            if (truth.k(i - 1, t))
                emit(bistatic_range(trp, scene.targets[t]),
                     MpcLabel{MpcKind::direct, t, -1, {}});
            for (int m = 0; m < m_count; ++m) {
                if (!truth.g.empty() && truth.g[t](i - 1, m))
                    emit(ip_length_target_first(trp, scene.targets[t],
                                                scene.scatterers[m].center),
                         MpcLabel{MpcKind::indirect_target_first, t, m, {}});
                if (!truth.h.empty() && truth.h[t](i - 1, m))
                    emit(ip_length_scatterer_first(trp, scene.targets[t],
                                                   scene.scatterers[m].center),
                         MpcLabel{MpcKind::indirect_scatterer_first, t, m, {}});
            }
        }
        const int spurious = noise_count(rng);
        for (int s = 0; s < spurious; ++s)
            peaks.push_back(Mpc{noise_range(rng), MpcLabel{MpcKind::noise, -1, -1, {}}});

        std::sort(peaks.begin(), peaks.end(),
                  [](const Mpc& a, const Mpc& b) { return a.range < b.range; });
        peaks = merge_unresolvable(std::move(peaks), set.resolution);
    }
    return set;
}

}  // namespace blockloc
