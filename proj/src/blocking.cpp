#include "blockloc/blocking.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace blockloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// b^e for small non-negative integer e, with 0^0 = 1.
double pow_int(double b, int e) {
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
}

std::uint32_t low_bits(int length) {
    return length >= 32 ? 0xffffffffu : ((1u << length) - 1u);
}

}  // namespace

BlockingVector BlockingVector::full(std::uint32_t bits, int length) {
    BlockingVector v;
    v.mask_ = low_bits(length);
    v.bits_ = bits & v.mask_;
    return v;
}

BlockingVector BlockingVector::from_string(std::string_view s) {
    BlockingVector v;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '1') v.set(static_cast<int>(i), true);
        else if (s[i] == '0') v.set(static_cast<int>(i), false);
    }
    return v;
}

void BlockingVector::set(int pos, bool direct_path_seen) {
    const std::uint32_t b = 1u << pos;
    mask_ |= b;
    if (direct_path_seen) bits_ |= b;
    else bits_ &= ~b;
}

int BlockingVector::known_count() const { return std::popcount(mask_); }
int BlockingVector::ones() const { return std::popcount(bits_); }
int BlockingVector::zeros() const { return std::popcount(mask_ & ~bits_); }
bool BlockingVector::is_full(int length) const { return mask_ == low_bits(length); }

BlockingVector BlockingVector::project(std::uint32_t mask) const {
    BlockingVector v;
    v.mask_ = mask_ & mask;
    v.bits_ = bits_ & v.mask_;
    return v;
}

std::string BlockingVector::to_string(int length) const {
    std::string s(length, '.');
    for (int i = 0; i < length; ++i)
        if (known(i)) s[i] = bit(i) ? '1' : '0';
    return s;
}

int hamming_distance(const BlockingVector& a, const BlockingVector& b) {
    if (a.mask() != b.mask())
        throw InconsistentVector("hamming distance needs identical known positions");
    return std::popcount((a.bits() ^ b.bits()) & a.mask());
}

std::optional<NodeFactors> factor_consistent(const BlockingVector& k, int m_tx, int m_rx) {
    const int len = m_tx * m_rx;
    if (!k.is_full(len)) return std::nullopt;
    if (k.bits() == 0) return NodeFactors{0, 0};
    const int first = std::countr_zero(k.bits());
    const int t0 = first % m_tx, r0 = first / m_tx;
    NodeFactors f;
    for (int j = 0; j < m_tx; ++j)
        if (k.bit(r0 * m_tx + j)) f.tx_bits |= 1u << j;
    for (int r = 0; r < m_rx; ++r)
        if (k.bit(r * m_tx + t0)) f.rx_bits |= 1u << r;
    for (int r = 0; r < m_rx; ++r)
        for (int j = 0; j < m_tx; ++j) {
            const bool expected = ((f.tx_bits >> j) & 1u) && ((f.rx_bits >> r) & 1u);
            if (k.bit(r * m_tx + j) != expected) return std::nullopt;
        }
    return f;
}

const std::vector<BlockingVector>& consistent_set(int m_tx, int m_rx) {
    static std::mutex mutex;
    static std::map<std::pair<int, int>, std::vector<BlockingVector>> cache;
    std::lock_guard lock(mutex);
    auto key = std::make_pair(m_tx, m_rx);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    const int len = m_tx * m_rx;
    std::set<std::uint32_t> seen;
    seen.insert(0);
    for (std::uint32_t v = 1; v < (1u << m_tx); ++v)
        for (std::uint32_t w = 1; w < (1u << m_rx); ++w) {
            std::uint32_t bits = 0;
            for (int r = 0; r < m_rx; ++r)
                for (int j = 0; j < m_tx; ++j)
                    if (((v >> j) & 1u) && ((w >> r) & 1u)) bits |= 1u << (r * m_tx + j);
            seen.insert(bits);
        }
    std::vector<BlockingVector> out;
    out.reserve(seen.size());
    for (std::uint32_t bits : seen) out.push_back(BlockingVector::full(bits, len));
    return cache.emplace(key, std::move(out)).first->second;
}

bool is_consistent(const BlockingVector& k, int m_tx, int m_rx) {
    const int len = m_tx * m_rx;
    if (k.is_full(len)) return factor_consistent(k, m_tx, m_rx).has_value();
    for (const BlockingVector& full : consistent_set(m_tx, m_rx))
        if ((full.bits() & k.mask()) == k.bits()) return true;
    return false;
}

std::vector<BlockingVector> consistent_within_one(const BlockingVector& khat, int m_tx, int m_rx) {
    std::set<std::uint32_t> bits_seen;
    for (const BlockingVector& full : consistent_set(m_tx, m_rx)) {
        const std::uint32_t proj = full.bits() & khat.mask();
        if (std::popcount(proj ^ khat.bits()) <= 1) bits_seen.insert(proj);
    }
    std::vector<BlockingVector> out;
    out.reserve(bits_seen.size());
    for (std::uint32_t bits : bits_seen) {
        BlockingVector v = BlockingVector::full(bits, 32).project(khat.mask());
        out.push_back(v);
    }
    return out;
}

double BlockingPmf::prob_full(const BlockingVector& k) const {
    for (const auto& [vec, p] : table)
        if (vec.bits() == k.bits()) return p;
    return 0.0;
}

double BlockingPmf::prob(const BlockingVector& partial) const {
    double acc = 0.0;
    for (const auto& [vec, p] : table)
        if ((vec.bits() & partial.mask()) == partial.bits()) acc += p;
    return acc;
}

double BlockingPmf::sum() const {
    double acc = 0.0;
    for (const auto& [vec, p] : table) acc += p;
    return acc;
}

double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

std::vector<double> binomial_pmf(int n, double p) {
    std::vector<double> pmf(n + 1, 0.0);
    for (int k = 0; k <= n; ++k) {
        double logc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
        double logp = (k > 0 ? k * std::log(p) : 0.0) +
                      (n - k > 0 ? (n - k) * std::log1p(-p) : 0.0);
        if (p == 0.0) pmf[k] = (k == 0) ? 1.0 : 0.0;
        else if (p == 1.0) pmf[k] = (k == n) ? 1.0 : 0.0;
        else pmf[k] = std::exp(logc + logp);
    }
    return pmf;
}

double prob_with_errors(const BlockingVector& khat, const BlockingPmf& pmf,
                        const ErrorRates& err) {
    const std::uint32_t mask = khat.mask();
    const std::uint32_t obs = khat.bits();
    double acc = 0.0;
    for (const auto& [k, p] : pmf.table) {
        if (p <= 0.0) continue;
        const std::uint32_t truth = k.bits() & mask;  // restriction to observed channels
        if (std::popcount(truth ^ obs) > 1) continue;
        const int n11 = std::popcount(obs & truth);
        const int n01 = std::popcount(~obs & truth & mask);  // observed 0, true 1
        const int n10 = std::popcount(obs & ~truth);         // observed 1, true 0
        const int n00 = std::popcount(~obs & ~truth & mask);
        acc += pow_int(err.rho01, n01) * pow_int(1.0 - err.rho01, n11) *
               pow_int(err.rho10, n10) * pow_int(1.0 - err.rho10, n00) * p;
    }
    return acc;
}

bool Corridor::contains(const Point2& p) const {
    const Point2 d = b - a;
    const double len = d.norm();
    const double half = 0.5 * width;
    if (len == 0.0) return (p - a).norm() < half;
    const Point2 u = d / len;
    const Point2 rel = p - a;
    const double along = rel.dot(u);
    if (along < 0.0 || along > len) return false;
    const double perp = std::abs(rel.x() * u.y() - rel.y() * u.x());
    return perp < half;
}

double corridor_union_area(const std::vector<Corridor>& corridors, long n_samples, Rng& rng) {
    if (corridors.empty() || n_samples <= 0) return 0.0;
    Region box{kInf, -kInf, kInf, -kInf};
    for (const auto& c : corridors) {
        const Point2 d = c.b - c.a;
        const double len = d.norm();
        const Point2 n = len > 0.0 ? Point2(-d.y() / len, d.x() / len) : Point2(1.0, 0.0);
        for (const Point2& corner :
             {Point2(c.a + 0.5 * c.width * n), Point2(c.a - 0.5 * c.width * n),
              Point2(c.b + 0.5 * c.width * n), Point2(c.b - 0.5 * c.width * n)}) {
            box.xmin = std::min(box.xmin, corner.x());
            box.xmax = std::max(box.xmax, corner.x());
            box.ymin = std::min(box.ymin, corner.y());
            box.ymax = std::max(box.ymax, corner.y());
        }
    }
    long hits = 0;
    for (long s = 0; s < n_samples; ++s) {
        const Point2 p = box.sample(rng);
        for (const auto& c : corridors)
            if (c.contains(p)) {
                ++hits;
                break;
            }
    }
    return box.area() * static_cast<double>(hits) / static_cast<double>(n_samples);
}

double prob_lower_bound(const BlockingVector& k, const Point2& target,
                        const std::vector<Point2>& txs, const std::vector<Point2>& rxs,
                        double intensity, double width, long n_area, Rng& rng) {
    const int m_tx = static_cast<int>(txs.size());
    const int m_rx = static_cast<int>(rxs.size());
    auto factors = factor_consistent(k, m_tx, m_rx);
    if (!factors)
        throw InconsistentVector("lower bound defined only for structurally valid full vectors");

    std::vector<Corridor> clear, obstructed;
    for (int j = 0; j < m_tx; ++j)
        ((factors->tx_bits >> j) & 1u ? clear : obstructed)
            .push_back(Corridor{target, txs[j], width});
    for (int r = 0; r < m_rx; ++r)
        ((factors->rx_bits >> r) & 1u ? clear : obstructed)
            .push_back(Corridor{target, rxs[r], width});

    const double clear_area = corridor_union_area(clear, n_area, rng);
    double p = std::exp(-intensity * clear_area);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (const Corridor& c : obstructed) {
        const double len = c.length();
        double outside_fraction = 0.0;
        if (len > 0.0 && n_area > 0) {
            const Point2 u = (c.b - c.a) / len;
            const Point2 n(-u.y(), u.x());
            long outside = 0;
            for (long s = 0; s < n_area; ++s) {
                const Point2 q =
                    c.a + (unit(rng) * len) * u + ((unit(rng) - 0.5) * c.width) * n;
                bool in_clear = false;
                for (const auto& cc : clear)
                    if (cc.contains(q)) {
                        in_clear = true;
                        break;
                    }
                if (!in_clear) ++outside;
            }
            outside_fraction = static_cast<double>(outside) / static_cast<double>(n_area);
        }
        const double area = c.width * len * outside_fraction;
        p *= 1.0 - std::exp(-intensity * area);
    }
    return p;
}

BlockingPmf empirical_pmf(const Point2& target, const std::vector<Point2>& txs,
                          const std::vector<Point2>& rxs, double intensity, double width,
                          long n_samples, Rng& rng, const Region* sample_box) {
    const int m_tx = static_cast<int>(txs.size());
    const int m_rx = static_cast<int>(rxs.size());
    const int len = m_tx * m_rx;

    Region box;
    if (sample_box) {
        box = *sample_box;
    } else {
        // Bounding box of all node-target corridors: fields outside it can
        // never obstruct, so sampling it equals a field over the whole plane.
        box = Region{target.x(), target.x(), target.y(), target.y()};
        auto absorb = [&](const Point2& p) {
            box.xmin = std::min(box.xmin, p.x());
            box.xmax = std::max(box.xmax, p.x());
            box.ymin = std::min(box.ymin, p.y());
            box.ymax = std::max(box.ymax, p.y());
        };
        for (const auto& p : txs) absorb(p);
        for (const auto& p : rxs) absorb(p);
        box.xmin -= 0.5 * width;
        box.xmax += 0.5 * width;
        box.ymin -= 0.5 * width;
        box.ymax += 0.5 * width;
    }

    std::poisson_distribution<int> count_dist(intensity * box.area());
    std::map<std::uint32_t, long> counts;
    std::vector<Scatterer> field;
    for (long s = 0; s < n_samples; ++s) {
        field.clear();
        const int n = count_dist(rng);
        for (int i = 0; i < n; ++i) field.push_back(Scatterer{box.sample(rng), width});
        std::uint32_t v = 0, w = 0;
        for (int j = 0; j < m_tx; ++j)
            if (line_of_sight(txs[j], target, field)) v |= 1u << j;
        for (int r = 0; r < m_rx; ++r)
            if (line_of_sight(rxs[r], target, field)) w |= 1u << r;
        std::uint32_t bits = 0;
        for (int r = 0; r < m_rx; ++r)
            for (int j = 0; j < m_tx; ++j)
                if (((v >> j) & 1u) && ((w >> r) & 1u)) bits |= 1u << (r * m_tx + j);
        ++counts[bits];
    }

    BlockingPmf pmf;
    pmf.kind = BlockingPmf::Kind::empirical;
    pmf.query = target;
    pmf.m_tx = m_tx;
    pmf.m_rx = m_rx;
    pmf.n_samples = n_samples;
    pmf.normalized = true;
    pmf.table.reserve(counts.size());
    for (const auto& [bits, count] : counts)
        pmf.table.emplace_back(BlockingVector::full(bits, len),
                               static_cast<double>(count) / static_cast<double>(n_samples));
    return pmf;
}

double IndependentBlocking::prob(const BlockingVector& khat) const {
    const double q = p_missed();
    return pow_int(1.0 - q, khat.ones()) * pow_int(q, khat.zeros());
}

double IndependentBlocking::nll(const BlockingVector& khat) const {
    const double q = p_missed();
    const int on = khat.ones();
    const int off = khat.zeros();
    double acc = 0.0;
    if (on > 0) {
        if (q >= 1.0) return kInf;
        acc += static_cast<double>(on) * -std::log(1.0 - q);
    }
    if (off > 0) {
        if (q <= 0.0) return kInf;
        acc += static_cast<double>(off) * -std::log(q);
    }
    return acc;
}

BlockingPmf IndependentBlocking::table(int m_tx, int m_rx) const {
    const int len = m_tx * m_rx;
    BlockingPmf pmf;
    pmf.kind = BlockingPmf::Kind::independent;
    pmf.m_tx = m_tx;
    pmf.m_rx = m_rx;
    pmf.normalized = true;
    const double q = p_missed();
    for (std::uint32_t bits = 0; bits < (1u << len); ++bits) {
        const int on = std::popcount(bits);
        pmf.table.emplace_back(BlockingVector::full(bits, len),
                               pow_int(1.0 - q, on) * pow_int(q, len - on));
    }
    return pmf;
}

int GridStats::cell_of(const Point2& p) const {
    int ix = static_cast<int>(std::floor((p.x() - region.xmin) / resolution));
    int iy = static_cast<int>(std::floor((p.y() - region.ymin) / resolution));
    ix = std::clamp(ix, 0, nx - 1);
    iy = std::clamp(iy, 0, ny - 1);
    return iy * nx + ix;
}

Point2 GridStats::cell_center(int cell) const {
    const int ix = cell % nx, iy = cell / nx;
    return {region.xmin + (ix + 0.5) * resolution, region.ymin + (iy + 0.5) * resolution};
}

GridStats grid_precompute(const Region& region, double resolution, const std::vector<Point2>& txs,
                          const std::vector<Point2>& rxs, double intensity, double width,
                          long n_samples, Rng& rng) {
    GridStats stats;
    stats.region = region;
    stats.resolution = resolution;
    stats.m_tx = static_cast<int>(txs.size());
    stats.m_rx = static_cast<int>(rxs.size());
    stats.nx = std::max(1, static_cast<int>(std::ceil(region.width() / resolution)));
    stats.ny = std::max(1, static_cast<int>(std::ceil(region.height() / resolution)));
    const int len = stats.m_tx * stats.m_rx;
    const std::uint64_t base = rng();

    stats.mean.assign(stats.num_cells(), VecX::Zero(len));
    stats.cov.assign(stats.num_cells(), MatX::Zero(len, len));
    std::vector<Scatterer> field;
    for (int cell = 0; cell < stats.num_cells(); ++cell) {
        const Point2 center = stats.cell_center(cell);
        Rng cell_rng = make_stream(base, cell, stream::model);
        std::poisson_distribution<int> count_dist(intensity * region.area());
        VecX sum = VecX::Zero(len);
        MatX outer = MatX::Zero(len, len);
        for (long s = 0; s < n_samples; ++s) {
            field.clear();
            const int n = count_dist(cell_rng);
            for (int i = 0; i < n; ++i)
                field.push_back(Scatterer{region.sample(cell_rng), width});
            std::uint32_t v = 0, w = 0;
            for (int j = 0; j < stats.m_tx; ++j)
                if (line_of_sight(txs[j], center, field)) v |= 1u << j;
            for (int r = 0; r < stats.m_rx; ++r)
                if (line_of_sight(rxs[r], center, field)) w |= 1u << r;
            VecX k(len);
            for (int r = 0; r < stats.m_rx; ++r)
                for (int j = 0; j < stats.m_tx; ++j)
                    k[r * stats.m_tx + j] =
                        (((v >> j) & 1u) && ((w >> r) & 1u)) ? 1.0 : 0.0;
            sum += k;
            outer += k * k.transpose();
        }
        stats.mean[cell] = sum / static_cast<double>(n_samples);
        stats.cov[cell] = outer / static_cast<double>(n_samples) -
                          stats.mean[cell] * stats.mean[cell].transpose();
    }
    return stats;
}

double mahalanobis_score(const BlockingVector& khat, const VecX& mean, const MatX& cov,
                         double eps) {
    std::vector<int> idx;
    for (int i = 0; i < mean.size(); ++i)
        if (khat.known(i)) idx.push_back(i);
    if (idx.empty()) return 0.0;
    const int n = static_cast<int>(idx.size());
    VecX d(n);
    MatX c(n, n);
    for (int a = 0; a < n; ++a) {
        d[a] = (khat.bit(idx[a]) ? 1.0 : 0.0) - mean[idx[a]];
        for (int b = 0; b < n; ++b) c(a, b) = cov(idx[a], idx[b]);
    }
    c += eps * MatX::Identity(n, n);
    Eigen::LLT<MatX> llt(c);
    if (llt.info() != Eigen::Success)
        throw SingularCovariance("cell covariance not invertible after regularization");
    return std::sqrt(std::max(0.0, d.dot(llt.solve(d))));
}

struct CellTableModel::Cache {
    std::mutex mutex;
    std::map<std::uint64_t, std::unique_ptr<BlockingPmf>> cells;
};

CellTableModel::CellTableModel(std::vector<Point2> txs, std::vector<Point2> rxs, Region box,
                               double cell_size, ErrorRates err, std::uint64_t seed)
    : txs_(std::move(txs)),
      rxs_(std::move(rxs)),
      box_(box),
      cell_size_(cell_size),
      err_(err),
      seed_(seed),
      cache_(std::make_shared<Cache>()) {}

const BlockingPmf& CellTableModel::cell_table(const Point2& p) const {
    const int nx = std::max(1, static_cast<int>(std::ceil(box_.width() / cell_size_)));
    const int ny = std::max(1, static_cast<int>(std::ceil(box_.height() / cell_size_)));
    int ix = static_cast<int>(std::floor((p.x() - box_.xmin) / cell_size_));
    int iy = static_cast<int>(std::floor((p.y() - box_.ymin) / cell_size_));
    ix = std::clamp(ix, 0, nx - 1);
    iy = std::clamp(iy, 0, ny - 1);
    const std::uint64_t key = static_cast<std::uint64_t>(iy) * nx + ix;

    {
        std::lock_guard lock(cache_->mutex);
        auto it = cache_->cells.find(key);
        if (it != cache_->cells.end()) return *it->second;
    }
    // Build outside the lock; the seed depends only on the cell, so a rare
    // duplicate build produces an identical table.
    const Point2 center{box_.xmin + (ix + 0.5) * cell_size_, box_.ymin + (iy + 0.5) * cell_size_};
    Rng rng = make_stream(seed_, key, stream::model);
    auto pmf = std::make_unique<BlockingPmf>(build_cell(center, rng));
    std::lock_guard lock(cache_->mutex);
    auto [it, inserted] = cache_->cells.emplace(key, std::move(pmf));
    return *it->second;
}

double CellTableModel::nll(const BlockingVector& khat, const Point2& p) const {
    const BlockingPmf& pmf = cell_table(p);
    const double pr = prob_with_errors(khat, pmf, err_);
    return pr > 0.0 ? -std::log(pr) : kInf;
}

EmpiricalBlockingModel::EmpiricalBlockingModel(std::vector<Point2> txs, std::vector<Point2> rxs,
                                               Region box, double intensity, double width,
                                               ErrorRates err, double cell_size, long n_samples,
                                               std::uint64_t seed)
    : CellTableModel(std::move(txs), std::move(rxs), box, cell_size, err, seed),
      intensity_(intensity),
      width_(width),
      n_samples_(n_samples) {}

BlockingPmf EmpiricalBlockingModel::build_cell(const Point2& center, Rng& rng) const {
    return empirical_pmf(center, txs_, rxs_, intensity_, width_, n_samples_, rng, &box_);
}

LowerBoundBlockingModel::LowerBoundBlockingModel(std::vector<Point2> txs, std::vector<Point2> rxs,
                                                 Region box, double intensity, double width,
                                                 ErrorRates err, double cell_size, long n_area,
                                                 std::uint64_t seed)
    : CellTableModel(std::move(txs), std::move(rxs), box, cell_size, err, seed),
      intensity_(intensity),
      width_(width),
      n_area_(n_area) {}

BlockingPmf LowerBoundBlockingModel::build_cell(const Point2& center, Rng& rng) const {
    const int m_tx = static_cast<int>(txs_.size());
    const int m_rx = static_cast<int>(rxs_.size());
    BlockingPmf pmf;
    pmf.kind = BlockingPmf::Kind::analytic_bound;
    pmf.query = center;
    pmf.m_tx = m_tx;
    pmf.m_rx = m_rx;
    pmf.normalized = false;
    for (const BlockingVector& k : consistent_set(m_tx, m_rx))
        pmf.table.emplace_back(
            k, prob_lower_bound(k, center, txs_, rxs_, intensity_, width_, n_area_, rng));
    return pmf;
}

}  // namespace blockloc
