#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "blockloc/blocking.hpp"
#include "blockloc/geom.hpp"
#include "blockloc/signal.hpp"

namespace blockloc {

/// One assignment of a measured peak to a candidate target.
struct MatchEntry {
    int trp = 0;  ///< 1-based channel index
    int mpc = 0;  ///< 0-based index into that channel's peak list
    auto operator<=>(const MatchEntry&) const = default;
};

/// A candidate target under construction: its claimed peaks (at most one
/// per channel), position fit, and the partial indicator vector over the
/// channels processed so far (1 where a peak is claimed, 0 where the channel
/// was processed but yielded none).
struct Matching {
    std::vector<MatchEntry> entries;  ///< sorted by channel
    LocationEstimate estimate{};
    BlockingVector khat{};
    double blocking_nll = 0.0;
    bool alive = true;
    int id = 0;
    int parent = -1;

    int size() const { return static_cast<int>(entries.size()); }
};

/// Order in which channels are visited during matching.
enum class OrderStrategy { identity, most_mpcs_first, fewest_mpcs_first, shuffled };

/// A permutation of 1..I per the strategy; ties are broken by channel index.
std::vector<int> processing_order(const MpcSet& mpcs, OrderStrategy strategy,
                                  std::uint64_t seed = 0);

struct AlgoParams {
    double delta = 3.0;  ///< residual gate: extend only when |res|/sd <= delta
    double mu = 6.0;     ///< prior gate: keep only when blocking_nll <= mu
    double sigma = 0.01; ///< range noise standard deviation, meters
    OrderStrategy order = OrderStrategy::most_mpcs_first;
    std::uint64_t order_seed = 0;
    double dedupe_radius = 0.0;     ///< cluster radius for final estimates; 0 -> 3 sigma
    double intersection_tol = 1e-9; ///< locus-intersection acceptance tolerance
};

/// Gate applied at the end of every stage.  Either a threshold on the prior
/// negative log score, or the peak-count rule of prior art (at most phi
/// channels without a claimed peak).
struct StageGate {
    double mu = std::numeric_limits<double>::infinity();
    int max_missing = -1;  ///< -1: use mu; >= 0: use the count rule

    bool admits(const BlockingVector& khat, double nll) const {
        if (max_missing >= 0) return khat.zeros() <= max_missing;
        return nll <= mu + 1e-9;
    }
};

/// Per-stage size diagnostics.
struct StageDiagnostics {
    int stage = 0;             ///< 1-based position in the processing order
    int trp = 0;               ///< channel processed at this stage
    int live_matchings = 0;
    int distinct_locations = 0;  ///< distinct estimate positions among live matchings
    long likelihood_evals = 0;   ///< cumulative candidate + prior evaluations
};

struct MtlResult {
    std::vector<Matching> estimates;  ///< final, deduplicated, disjoint
    double objective = 0.0;           ///< summed selection objective of the estimates
    std::vector<StageDiagnostics> stages;
    long likelihood_evals = 0;
    /// Extend/carry steps whose prior score fell below the parent vector's
    /// score at the same evaluation point (impossible for priors whose
    /// score is a probability; always 0 unless the prior is defective).
    int nll_monotone_violations = 0;
    std::vector<int> order;           ///< channel processing order used

    int t_hat() const { return static_cast<int>(estimates.size()); }
    std::vector<Point2> points() const;
};

/// The residual score |res|/sd of attaching `candidate` to `matching`
/// (nullopt candidate -> 0), paired with the prior negative log score of the
/// matching's indicator vector at its estimate.  The pair is what the
/// (delta, mu) gates compare against, coordinatewise.
std::pair<double, double> vector_likelihood(const Matching& matching,
                                            const std::optional<RangeEllipse>& candidate,
                                            const BlockingModel& model, const AlgoParams& params);

/// Staged construction of target matchings.
///
/// Channels are visited in processing order.  At each stage every live
/// matching either claims the best residual-gated peak of the new channel
/// (position refit, indicator extended by 1) or is carried unchanged
/// (indicator extended by 0).  When the prior enforces structural validity
/// and a matching's indicator becomes invalid, repair branches are spawned:
/// for every valid vector one bit below it, a copy with the implicated peak
/// dropped; the unrepaired matching also survives, scored through the
/// detection-error model.  Each stage ends by seeding fresh two-peak
/// matchings from locus intersections of the new channel against every
/// earlier one, and by applying the stage gate to everything.  After the
/// last stage, matchings are clustered by position; cluster winners with a
/// negative selection objective are reported greedily under peak
/// disjointness.
MtlResult run_bayesian_mtl(const MpcSet& mpcs, const Network& net, const BlockingModel& model,
                           const AlgoParams& params, const StageGate* gate_override = nullptr);

/// Prior-art baseline: identical staged construction, but gated by the
/// claimed-peak count (at most phi channels missing) instead of the prior
/// score.  `prior` supplies the per-channel detection probability used in
/// the final selection objective.
MtlResult run_size_threshold_baseline(const MpcSet& mpcs, const Network& net,
                                      const IndependentBlocking& prior, const AlgoParams& params,
                                      int phi);

/// Selection objective of one complete matching: residual fit cost plus the
/// per-peak description cost plus the prior score,
///   sum(res^2)/sigma^2 + size * log(sqrt(2 pi) sigma) + nll(khat).
/// Negative values mean declaring the target improves the global objective.
double selection_objective(const Matching& matching, const MpcSet& mpcs, const Network& net,
                           const BlockingModel& model, double sigma);

/// Summed selection objective of a set of complete matchings.
double selection_objective(const std::vector<Matching>& matchings, const MpcSet& mpcs,
                           const Network& net, const BlockingModel& model, double sigma);

/// Exhaustive minimizer of the selection objective over sets of pairwise
/// peak-disjoint matchings (0..max_targets of them, each claiming >= 2
/// peaks, mirroring the staged matcher's search space).  Each matching is
/// fitted from every pairwise locus intersection of its peaks and the best
/// resulting objective is kept.  Throws InstanceTooLarge when the
/// enumeration would exceed `guard` candidate sets.
struct BruteForceResult {
    double objective = 0.0;
    std::vector<Matching> matchings;
    long sets_evaluated = 0;
};
BruteForceResult brute_force_p3(const MpcSet& mpcs, const Network& net, const BlockingModel& model,
                                const AlgoParams& params, int max_targets,
                                long guard = 10'000'000);

/// Prior-score threshold equivalent to allowing phi missing peaks out of
/// num_trps under the independent baseline:
///   -(num_trps - phi) log(1 - p_missed) - phi log(p_missed).
/// Monotone increasing in phi only when p_missed < 1/2; warns on stderr
/// otherwise.
double mu_of_phi(int phi, double p_missed, int num_trps);

}  // namespace blockloc
