#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "blockloc/errors.hpp"
#include "blockloc/scene.hpp"
#include "blockloc/types.hpp"

namespace blockloc {

/// A (possibly partial) binary indicator vector over channels: bit i tells
/// whether channel i sees a direct path to the target.  Positions may be
/// unknown (not yet observed); known positions are tracked in a mask.
/// Supports up to 32 channels.
class BlockingVector {
public:
    BlockingVector() = default;

    /// A fully known vector from the low `length` bits of `bits`.
    static BlockingVector full(std::uint32_t bits, int length);

    /// Parse "101..0" style strings; '.' marks an unknown position.
    /// Position 0 is the first character.
    static BlockingVector from_string(std::string_view s);

    /// Marks position `pos` (0-based) known with the given value.
    void set(int pos, bool direct_path_seen);

    bool known(int pos) const { return (mask_ >> pos) & 1u; }
    bool bit(int pos) const { return (bits_ >> pos) & 1u; }

    std::uint32_t bits() const { return bits_; }
    std::uint32_t mask() const { return mask_; }

    int known_count() const;
    int ones() const;                    ///< known positions with value 1
    int zeros() const;                   ///< known positions with value 0
    bool is_full(int length) const;      ///< all of 0..length-1 known

    /// Restriction to the positions in `mask` (bits outside it dropped).
    BlockingVector project(std::uint32_t mask) const;

    std::string to_string(int length) const;

    friend bool operator==(const BlockingVector&, const BlockingVector&) = default;

private:
    std::uint32_t bits_ = 0;
    std::uint32_t mask_ = 0;
};

struct BlockingVectorHash {
    std::size_t operator()(const BlockingVector& v) const {
        return std::hash<std::uint64_t>{}((std::uint64_t(v.mask()) << 32) | v.bits());
    }
};

/// Hamming distance over the common known positions (both masks must agree).
int hamming_distance(const BlockingVector& a, const BlockingVector& b);

/// The two per-node factor patterns of a structurally valid vector.
struct NodeFactors {
    std::uint32_t tx_bits = 0;
    std::uint32_t rx_bits = 0;
};

/// For a fully known vector, returns the per-node factorization
/// bit(i) = tx_bits[i_T] & rx_bits[i_R] when one exists (the all-zero vector
/// factorizes with both factors zero); nullopt otherwise.
std::optional<NodeFactors> factor_consistent(const BlockingVector& k, int m_tx, int m_rx);

/// All structurally valid fully-known vectors for an m_tx x m_rx network:
/// every outer product of nonzero node patterns, plus the all-zero vector.
/// Size = (2^m_tx - 1)(2^m_rx - 1) + 1.  Cached; the returned reference is
/// stable for the process lifetime.
const std::vector<BlockingVector>& consistent_set(int m_tx, int m_rx);

/// Whether a (possibly partial) vector can be completed to a structurally
/// valid one.
bool is_consistent(const BlockingVector& k, int m_tx, int m_rx);

/// All restrictions of structurally valid vectors to khat's known positions
/// that lie within Hamming distance 1 of khat (deduplicated).
std::vector<BlockingVector> consistent_within_one(const BlockingVector& khat, int m_tx, int m_rx);

/// Detection error rates linking the true indicator vector to the observed
/// one: rho01 = P(observe 0 | true 1), rho10 = P(observe 1 | true 0).
struct ErrorRates {
    double rho01 = 0.0;
    double rho10 = 0.0;
};

/// A probability table over fully known indicator vectors at one query
/// point.  Entries absent from the table have probability zero.  For the
/// analytic lower-bound kind the values are per-vector lower bounds and do
/// not sum to one.
struct BlockingPmf {
    enum class Kind { empirical, analytic_bound, independent, exact };

    Kind kind = Kind::exact;
    Point2 query = Point2::Zero();
    int m_tx = 0;
    int m_rx = 0;
    long n_samples = 0;       ///< 0 for exact/analytic tables
    bool normalized = true;

    std::vector<std::pair<BlockingVector, double>> table;

    /// Probability of one fully known vector (0 when absent).
    double prob_full(const BlockingVector& k) const;

    /// Probability of a partial vector: sum over all full vectors in the
    /// table agreeing with it on its known positions.
    double prob(const BlockingVector& partial) const;

    double sum() const;
};

/// Upper Gaussian tail probability.
double q_function(double x);

/// Probability mass function of Binomial(n, p) over 0..n.
std::vector<double> binomial_pmf(int n, double p);

/// Probability of observing `khat` (full or partial) when the true vector is
/// distributed per `pmf` and each observed bit may be flipped independently
/// per `err`: sums error-weighted mass over all true vectors whose
/// restriction to khat's known positions is within Hamming distance 1.
/// Returns 0 when no such vector has mass ("no target is present there").
double prob_with_errors(const BlockingVector& khat, const BlockingPmf& pmf, const ErrorRates& err);

/// A width-w rectangle around segment ab (no end caps).
struct Corridor {
    Point2 a = Point2::Zero();
    Point2 b = Point2::Zero();
    double width = 0.0;

    double length() const { return (b - a).norm(); }
    bool contains(const Point2& p) const;
};

/// Monte Carlo area of the union of corridors, sampled over their joint
/// bounding box.
double corridor_union_area(const std::vector<Corridor>& corridors, long n_samples, Rng& rng);

/// Analytic lower bound on the probability of a fully known, structurally
/// valid indicator vector under a Poisson scatterer field of the given
/// intensity: no center may fall in any corridor to an unobstructed node,
/// and each obstructed node needs a center in the part of its corridor
/// outside the clear set (overlaps between the obstructed parts are
/// ignored, which can only lower the value).  Areas are estimated by Monte
/// Carlo with n_area points.  Throws InconsistentVector.
double prob_lower_bound(const BlockingVector& k, const Point2& target,
                        const std::vector<Point2>& txs, const std::vector<Point2>& rxs,
                        double intensity, double width, long n_area, Rng& rng);

/// Empirical indicator-vector distribution at a query point: draws
/// n_samples Poisson scatterer fields and tallies the resulting per-node
/// visibility outer products.  Fields are sampled over `sample_box` when
/// given, otherwise over the bounding box of all node-target corridors
/// (equivalent to a field covering the whole plane).
BlockingPmf empirical_pmf(const Point2& target, const std::vector<Point2>& txs,
                          const std::vector<Point2>& rxs, double intensity, double width,
                          long n_samples, Rng& rng, const Region* sample_box = nullptr);

/// Baseline prior that ignores both blocking correlation across channels and
/// its dependence on position: each channel independently fails to produce a
/// direct-path detection with the same probability p_missed.
struct IndependentBlocking {
    double p_los = 1.0;  ///< single-leg clear probability
    double delta = 3.0;  ///< residual gate width used for the miss rate

    /// Chance that at least one leg of a channel is obstructed.
    double p_blocked() const { return 1.0 - p_los * p_los; }

    /// Chance that a channel yields no direct-path detection: blocked, or
    /// clear but the peak falls outside the residual gate.
    double p_missed() const { return (1.0 - p_blocked()) * 2.0 * q_function(delta) + p_blocked(); }

    /// Product over known positions of per-channel detection probabilities.
    double prob(const BlockingVector& khat) const;

    /// -log prob, computed as ones*a + zeros*b with cached per-bit costs so
    /// that threshold comparisons reduce exactly to bit counts.
    double nll(const BlockingVector& khat) const;

    /// Full 2^I product table (structural validity deliberately ignored).
    BlockingPmf table(int m_tx, int m_rx) const;
};

/// Per-cell first and second moments of the indicator vector over a map
/// grid, for the distance-based score below.
struct GridStats {
    Region region{};
    double resolution = 1.0;
    int m_tx = 0, m_rx = 0;
    int nx = 0, ny = 0;
    std::vector<VecX> mean;  ///< per cell, length I
    std::vector<MatX> cov;   ///< per cell, I x I

    int num_cells() const { return nx * ny; }
    int cell_of(const Point2& p) const;        ///< clamped to the grid
    Point2 cell_center(int cell) const;
};

/// Estimates per-cell mean and covariance of the indicator vector by Monte
/// Carlo over Poisson scatterer fields on `region`.
GridStats grid_precompute(const Region& region, double resolution, const std::vector<Point2>& txs,
                          const std::vector<Point2>& rxs, double intensity, double width,
                          long n_samples, Rng& rng);

/// sqrt((khat - m)^T (C + eps I)^-1 (khat - m)) over khat's known positions
/// (the corresponding subvector/submatrix).  Throws SingularCovariance.
double mahalanobis_score(const BlockingVector& khat, const VecX& mean, const MatX& cov, double eps);

/// Position-dependent prior over indicator vectors, queried as a negative
/// log score during matching.  Implementations decide whether structural
/// validity is part of the prior (which drives repair branching in the
/// matcher) and whether their score behaves like a probability (never
/// increasing when a vector is extended by one position).
class BlockingModel {
public:
    virtual ~BlockingModel() = default;

    /// Negative log score of observing `khat` for a target at `p`;
    /// +infinity when impossible.
    virtual double nll(const BlockingVector& khat, const Point2& p) const = 0;

    /// Whether the prior assigns zero mass to structurally invalid vectors.
    virtual bool enforces_consistency() const { return true; }

    /// Whether nll is non-decreasing under extension of khat by one
    /// position (true for probability-based scores).
    virtual bool nll_is_monotone() const { return true; }

    virtual std::string name() const = 0;
};

/// Shared machinery for models that evaluate a per-cell probability table
/// lazily: queries snap to a cell of size `cell_size`, each cell's table is
/// built once (thread-safe, order-independent: the builder RNG is seeded
/// from the cell coordinates) and reused.
class CellTableModel : public BlockingModel {
public:
    CellTableModel(std::vector<Point2> txs, std::vector<Point2> rxs, Region box, double cell_size,
                   ErrorRates err, std::uint64_t seed);

    double nll(const BlockingVector& khat, const Point2& p) const final;

    /// The cached table covering `p` (built on demand); exposed for tests.
    const BlockingPmf& cell_table(const Point2& p) const;

    /// Same cached tables, different detection error rates.
    void set_error_rates(ErrorRates err) { err_ = err; }
    ErrorRates error_rates() const { return err_; }

protected:
    virtual BlockingPmf build_cell(const Point2& center, Rng& rng) const = 0;

    std::vector<Point2> txs_;
    std::vector<Point2> rxs_;
    Region box_{};
    double cell_size_ = 1.0;
    ErrorRates err_{};
    std::uint64_t seed_ = 0;

private:
    struct Cache;
    std::shared_ptr<Cache> cache_;
};

/// Monte Carlo empirical prior: per-cell tables from sampled scatterer
/// fields restricted to the sampling box.
class EmpiricalBlockingModel final : public CellTableModel {
public:
    EmpiricalBlockingModel(std::vector<Point2> txs, std::vector<Point2> rxs, Region box,
                           double intensity, double width, ErrorRates err, double cell_size,
                           long n_samples, std::uint64_t seed);

    std::string name() const override { return "empirical"; }

protected:
    BlockingPmf build_cell(const Point2& center, Rng& rng) const override;

private:
    double intensity_;
    double width_;
    long n_samples_;
};

/// Analytic corridor-geometry prior: per-cell tables of per-vector lower
/// bounds (deliberately not normalized).
class LowerBoundBlockingModel final : public CellTableModel {
public:
    LowerBoundBlockingModel(std::vector<Point2> txs, std::vector<Point2> rxs, Region box,
                            double intensity, double width, ErrorRates err, double cell_size,
                            long n_area, std::uint64_t seed);

    std::string name() const override { return "lower-bound"; }
    bool nll_is_monotone() const override { return true; }

protected:
    BlockingPmf build_cell(const Point2& center, Rng& rng) const override;

private:
    double intensity_;
    double width_;
    long n_area_;
};

/// The position-independent per-channel baseline as a BlockingModel.
/// Structural validity is not part of this prior.
class IndependentBlockingModel final : public BlockingModel {
public:
    explicit IndependentBlockingModel(IndependentBlocking params) : params_(params) {}

    double nll(const BlockingVector& khat, const Point2&) const override {
        return params_.nll(khat);
    }
    bool enforces_consistency() const override { return false; }
    std::string name() const override { return "independent"; }

    const IndependentBlocking& params() const { return params_; }

private:
    IndependentBlocking params_;
};

/// Distance-based prior from precomputed grid moments: the score is the
/// Mahalanobis distance of khat from the cell mean, not a probability, so
/// it is neither consistency-enforcing nor monotone under extension.
class GridBlockingModel final : public BlockingModel {
public:
    GridBlockingModel(GridStats stats, double eps) : stats_(std::move(stats)), eps_(eps) {}

    double nll(const BlockingVector& khat, const Point2& p) const override {
        int c = stats_.cell_of(p);
        return mahalanobis_score(khat, stats_.mean[c], stats_.cov[c], eps_);
    }
    bool enforces_consistency() const override { return false; }
    bool nll_is_monotone() const override { return false; }
    std::string name() const override { return "grid"; }

    const GridStats& stats() const { return stats_; }

private:
    GridStats stats_;
    double eps_;
};

}  // namespace blockloc
