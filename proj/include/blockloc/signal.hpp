#pragma once

#include <vector>

#include "blockloc/scene.hpp"
#include "blockloc/types.hpp"

namespace blockloc {

/// Provenance of a simulated range peak (simulation-side bookkeeping; the
/// inference side never reads it).
enum class MpcKind {
    direct,                   ///< tx -> target -> rx
    indirect_target_first,    ///< tx -> target -> scatterer -> rx
    indirect_scatterer_first, ///< tx -> scatterer -> target -> rx
    noise,
    merged,                   ///< several unresolvable peaks collapsed into one
};

struct MpcLabel {
    MpcKind kind = MpcKind::noise;
    int target = -1;     ///< 0-based target index, when applicable
    int scatterer = -1;  ///< 0-based scatterer index, when applicable
    std::vector<MpcLabel> parts;  ///< constituents, for merged peaks (range order)
};

/// One extracted range peak at a channel.
struct Mpc {
    double range = 0.0;
    MpcLabel label{};
};

struct SignalParams {
    double sigma = 0.01;       ///< range noise standard deviation, meters
    double noise_rate = 1.0;   ///< mean spurious peak count per channel
    double resolution = 0.0;   ///< merge threshold; 0 -> 2 sigma
};

/// Per-channel sorted range peaks.
struct MpcSet {
    int num_trps = 0;
    double r_obs = 0.0;
    double sigma = 0.0;
    double resolution = 0.0;
    std::vector<std::vector<Mpc>> per_trp;  ///< index 0 holds channel 1

    const std::vector<Mpc>& at(int trp_index) const { return per_trp.at(trp_index - 1); }
    std::vector<int> counts() const;
    int total() const;
};

/// Simulates the measured peaks of every channel: a noisy direct-path range
/// for each unobstructed target, a noisy three-leg range for each existing
/// bounce path, and Poisson-many uniform spurious peaks; then merges peaks
/// closer than the resolution threshold.  Peaks are Gaussian around the true
/// path length, redrawn (up to 100 times, then clamped) to stay within
/// [0, r_obs]; paths longer than r_obs are outside the observation window
/// and dropped.
MpcSet generate_mpcs(const Scene& scene, const GroundTruth& truth, const SignalParams& params,
                     Rng& rng);

/// Greedy left-to-right merge of a range-sorted peak list: a peak within
/// `threshold` of the previously retained one is absorbed into it (the
/// earliest peak is retained and keeps its range; a merged peak's label
/// records all constituents).  Retained gaps are all > threshold.
std::vector<Mpc> merge_unresolvable(std::vector<Mpc> sorted, double threshold);

}  // namespace blockloc
