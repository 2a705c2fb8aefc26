#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "blockloc/mtl.hpp"
#include "blockloc/scene.hpp"
#include "blockloc/signal.hpp"

namespace blockloc {

/// Detection bookkeeping for one realization.
struct ScorePair {
    int detected = 0;      ///< true targets with at least one estimate within radius
    int false_alarms = 0;  ///< estimates with no true target within radius
};

/// Radius-based scoring: a target counts as detected when any estimate lies
/// within `radius` of it; an estimate with no target within `radius` is a
/// false alarm.  Many-to-one by design (no optimal assignment).
ScorePair score(const std::vector<Point2>& estimates, const std::vector<Point2>& targets,
                double radius);

enum class ModelKind { empirical, lower_bound, independent, grid };

/// How to build the blocking prior for a run.
struct ModelParams {
    ModelKind kind = ModelKind::empirical;
    double cell_size = 1.0;       ///< cache cell size for table models, meters
    long n_samples = 10000;       ///< empirical table samples per cell
    long n_area = 100000;         ///< area samples for the analytic bound
    double eps = 1e-6;            ///< covariance regularizer for the grid model
    double grid_resolution = 1.0; ///< grid cell size for the grid model
    long grid_samples = 2000;     ///< samples per grid cell for the grid model
    double d_avg = 0.0;           ///< mean leg length for the independent prior
    double p_los = -1.0;          ///< independent prior leg-clear chance; <0 -> exp(-intensity*width*d_avg)
    double rho01 = -1.0;          ///< observed-0-given-1 rate; <0 -> 2 Q(delta)
    double rho10 = -1.0;          ///< observed-1-given-0 rate; <0 -> 2 Q(delta)

    double resolved_p_los(double intensity, double width) const;
};

/// One point of a threshold sweep.
struct SweepPoint {
    double delta = 3.0;
    double mu = 6.0;
    int phi = -1;           ///< >= 0: gate by peak count (prior-art rule)
    bool size_gate = false; ///< true: use the phi count gate
};

struct EnsembleParams {
    SceneConfig scene{};
    SignalParams signal{};
    AlgoParams algo{};
    ModelParams model{};
    IpPolicy ip_policy = IpPolicy::none;
    double p_ip = 0.3;
    int n_realizations = 100;
    std::uint64_t seed = 1;
    int threads = 1;
    bool with_genie = false;
    double radius = 0.0;  ///< scoring radius; 0 -> 3 sigma
};

/// One (realization, sweep point) outcome.
struct RealizationRecord {
    int realization = 0;
    double delta = 0.0;
    double mu = 0.0;
    int phi = -1;
    int t_true = 0;
    int t_hat = 0;
    int detected = 0;
    int false_alarms = 0;
    int genie_detected = -1;  ///< -1 when the genie benchmark was not run
    bool placement_failed = false;
    double seconds = 0.0;
};

/// Aggregates for one sweep point.
struct SweepSummary {
    SweepPoint point{};
    double p_d = 0.0;      ///< pooled: total detected / total true targets
    double p_f = 0.0;      ///< pooled: total false alarms / total reported targets, 0 when none
    double p_d_se = 0.0;
    double p_f_se = 0.0;
    double genie_p_d = -1.0;
    int zero_denominator_count = 0;  ///< realizations with no estimates at all
    int failures = 0;                ///< placement failures
};

struct EnsembleReport {
    std::vector<RealizationRecord> rows;  ///< realization-major, sweep-point-minor
    std::vector<SweepSummary> summaries;
    double wall_seconds = 0.0;
};

/// Runs n independent seeded realizations; each one samples a scene,
/// simulates its peaks, builds the blocking prior and runs the matcher at
/// every sweep point (sharing the per-realization world and prior cache
/// across points).  Realizations run on a worker pool; records are stored
/// by realization index, so output is independent of scheduling.
EnsembleReport run_ensemble_sweep(const EnsembleParams& params,
                                  const std::vector<SweepPoint>& points);

/// Single-point convenience wrapper around run_ensemble_sweep.
EnsembleReport run_ensemble(const EnsembleParams& params);

/// Monte Carlo distribution of the per-target count of unobstructed
/// channels, over `n` sampled scenes (every target of every scene
/// contributes one count).  Returns a pmf over 0..I.
std::vector<double> dp_count_distribution(const SceneConfig& cfg, int n, std::uint64_t seed,
                                          int threads = 1);

/// The same distribution under the independent baseline: Binomial(I,
/// 1 - p_missed), analytic.
std::vector<double> dp_count_distribution(const IndependentBlocking& prior, int num_trps);

/// Benchmark with truth-supplied associations: for each true target,
/// assembles the matching from its truth-labeled peaks (merged peaks count
/// when a constituent matches), fits the position, and reports the target
/// when at least two peaks exist and the prior gate passes.  No search is
/// involved, and only true matchings are evaluated, so false alarms are
/// zero by construction.
MtlResult genie_run(const MpcSet& mpcs, const Scene& scene, const GroundTruth& truth,
                    const BlockingModel& model, const AlgoParams& params);

/// Builds the configured blocking prior for one realization's scene.
std::unique_ptr<BlockingModel> build_model(const ModelParams& mp, const SceneConfig& scfg,
                                           const Network& net, double delta, std::uint64_t seed);

}  // namespace blockloc
