#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "blockloc/blocking.hpp"

using namespace blockloc;

namespace {

std::set<std::pair<std::uint32_t, std::uint32_t>> as_set(const std::vector<BlockingVector>& vs) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> out;
    for (const BlockingVector& v : vs) out.insert({v.mask(), v.bits()});
    return out;
}

}  // namespace

TEST_SUITE("blocking") {

TEST_CASE("indicator vectors track known positions and values") {
    BlockingVector v = BlockingVector::from_string("101..0");
    CHECK(v.known(0));
    CHECK(v.bit(0));
    CHECK(v.known(1));
    CHECK_FALSE(v.bit(1));
    CHECK_FALSE(v.known(3));
    CHECK(v.known_count() == 4);
    CHECK(v.ones() == 2);
    CHECK(v.zeros() == 2);
    CHECK_FALSE(v.is_full(6));
    CHECK(v.to_string(6) == "101..0");

    v.set(3, true);
    v.set(4, false);
    CHECK(v.is_full(6));
    CHECK(v.to_string(6) == "101100");

    const BlockingVector full = BlockingVector::full(0b1011u, 4);
    CHECK(full.is_full(4));
    CHECK(full.to_string(4) == "1101");  // position 0 first

    const BlockingVector proj = full.project(0b0101u);
    CHECK(proj.known_count() == 2);
    CHECK(proj.bit(0));
    CHECK(proj.known(2));
    CHECK_FALSE(proj.bit(2));
    CHECK_FALSE(proj.known(1));
}

TEST_CASE("hamming distance counts disagreements on shared known positions") {
    const BlockingVector a = BlockingVector::from_string("1100");
    const BlockingVector b = BlockingVector::from_string("1010");
    CHECK(hamming_distance(a, b) == 2);
    CHECK(hamming_distance(a, a) == 0);
    const BlockingVector partial = BlockingVector::from_string("1..0");
    CHECK(hamming_distance(partial.project(partial.mask()), a.project(partial.mask())) == 0);
}

TEST_CASE("structural validity is an outer product of node patterns") {
    // transmitters cycle fastest: position p of channel p+1
    const BlockingVector good = BlockingVector::from_string("110110110");
    const auto f = factor_consistent(good, 3, 3);
    REQUIRE(f.has_value());
    CHECK(f->tx_bits == 0b011u);
    CHECK(f->rx_bits == 0b111u);

    const BlockingVector bad = BlockingVector::from_string("110111100");
    CHECK_FALSE(factor_consistent(bad, 3, 3).has_value());

    const BlockingVector zero = BlockingVector::from_string("000000000");
    CHECK(factor_consistent(zero, 3, 3).has_value());
}

TEST_CASE("valid-vector counts follow the closed form") {
    CHECK(consistent_set(3, 3).size() == 50);
    CHECK(consistent_set(1, 1).size() == 2);
    CHECK(consistent_set(2, 1).size() == 4);
    CHECK(consistent_set(2, 2).size() == 10);
    CHECK(consistent_set(4, 3).size() == (15 * 7) + 1);
}

TEST_CASE("the 2x2 valid set matches exhaustive factorization") {
    std::set<std::uint32_t> from_set;
    for (const BlockingVector& v : consistent_set(2, 2)) {
        CHECK(v.is_full(4));
        from_set.insert(v.bits());
    }
    CHECK(from_set.size() == consistent_set(2, 2).size());  // no duplicates
    for (std::uint32_t bits = 0; bits < 16; ++bits) {
        const BlockingVector v = BlockingVector::full(bits, 4);
        CHECK(from_set.count(bits) == (factor_consistent(v, 2, 2) ? 1u : 0u));
    }
}

TEST_CASE("partial vectors are valid when some completion is") {
    BlockingVector v;
    v.set(0, true);
    v.set(2, false);
    CHECK(is_consistent(v, 3, 3));
    // channels 1 and 5 share no node; both set with channels 2,4 off is a
    // rectangle violation: k1=v1w1, k5=v2w2 on but k2=v2w1, k4=v1w2 off
    const BlockingVector bad = BlockingVector::from_string("10.01");
    CHECK_FALSE(is_consistent(bad, 3, 3));
    CHECK(is_consistent(BlockingVector::from_string("11.11"), 3, 3));
}

TEST_CASE("distance-one valid restrictions match a brute-force scan") {
    const std::vector<BlockingVector> khats = {
        BlockingVector::from_string("10.01"), BlockingVector::from_string("110110110"),
        BlockingVector::from_string("1...0"), BlockingVector::from_string("111.....0")};
    for (const BlockingVector& khat : khats) {
        std::vector<BlockingVector> expected;
        for (const BlockingVector& full : consistent_set(3, 3)) {
            const BlockingVector r = full.project(khat.mask());
            if (hamming_distance(r, khat) <= 1) expected.push_back(r);
        }
        CHECK(as_set(consistent_within_one(khat, 3, 3)) == as_set(expected));
    }
}

TEST_CASE("tail probability and binomial table reference values") {
    CHECK(q_function(0.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(q_function(1.0) == doctest::Approx(0.158655253931).epsilon(1e-9));
    CHECK(q_function(3.0) == doctest::Approx(0.001349898032).epsilon(1e-9));
    CHECK(q_function(-1.0) == doctest::Approx(1.0 - 0.158655253931).epsilon(1e-9));

    const auto b = binomial_pmf(3, 0.5);
    REQUIRE(b.size() == 4);
    CHECK(b[0] == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(b[1] == doctest::Approx(0.375).epsilon(1e-12));
    const auto b9 = binomial_pmf(9, 0.3);
    double sum = 0.0;
    for (double x : b9) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("error-weighted observation probability sums nearby truth vectors") {
    // 1x2 network: I = 2, valid vectors 00, 10var? -- use an explicit table
    BlockingPmf pmf;
    pmf.m_tx = 1;
    pmf.m_rx = 2;
    pmf.table = {{BlockingVector::full(0b00u, 2), 0.4},
                 {BlockingVector::full(0b11u, 2), 0.35},
                 {BlockingVector::full(0b01u, 2), 0.15},
                 {BlockingVector::full(0b10u, 2), 0.10}};

    SUBCASE("no errors reduces to the table") {
        const ErrorRates none{0.0, 0.0};
        CHECK(prob_with_errors(BlockingVector::full(0b11u, 2), pmf, none) ==
              doctest::Approx(0.35).epsilon(1e-12));
        CHECK(prob_with_errors(BlockingVector::from_string("1."), pmf, none) ==
              doctest::Approx(0.35 + 0.15).epsilon(1e-12));
    }
    SUBCASE("hand-computed error-rate mixture") {
        const ErrorRates err{0.1, 0.05};
        // khat = 11: truth 11 (dist 0), 01 and 10 (dist 1); 00 excluded
        const double expected = 0.35 * (0.9 * 0.9) + 0.15 * (0.9 * 0.05) + 0.10 * (0.05 * 0.9);
        CHECK(prob_with_errors(BlockingVector::full(0b11u, 2), pmf, err) ==
              doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("mass farther than one flip contributes nothing") {
        BlockingPmf far;
        far.m_tx = 1;
        far.m_rx = 2;
        far.table = {{BlockingVector::full(0b00u, 2), 1.0}};
        const ErrorRates err{0.1, 0.05};
        CHECK(prob_with_errors(BlockingVector::full(0b11u, 2), far, err) == 0.0);
    }
}

TEST_CASE("corridor membership matches the blocking rule") {
    const Corridor c{Point2(0, 0), Point2(10, 0), 5.0};
    CHECK(c.length() == doctest::Approx(10.0));
    CHECK(c.contains(Point2(5, 2.4)));
    CHECK_FALSE(c.contains(Point2(5, 2.5)));  // strict on the sides
    CHECK_FALSE(c.contains(Point2(11, 0)));   // no end caps
    CHECK(c.contains(Point2(0, 0)));          // span is inclusive
    CHECK(c.contains(Point2(10, 0)));
}

TEST_CASE("corridor union areas against closed forms") {
    Rng rng(2024);
    SUBCASE("a single axis-aligned corridor fills its own bounding box") {
        const std::vector<Corridor> cs = {{Point2(0, 0), Point2(10, 0), 2.0}};
        CHECK(corridor_union_area(cs, 50000, rng) == doctest::Approx(20.0).epsilon(1e-9));
    }
    SUBCASE("perpendicular corridors overlap in a square") {
        const std::vector<Corridor> cs = {{Point2(0, 0), Point2(10, 0), 2.0},
                                          {Point2(5, -5), Point2(5, 5), 2.0}};
        // 20 + 20 - 4; Monte Carlo over the 10 x 10 box
        const double est = corridor_union_area(cs, 400000, rng);
        CHECK(std::abs(est - 36.0) <= 0.26);  // 3.4 binomial standard errors
    }
}

TEST_CASE("the corridor bound is exact in an empty field and zero when impossible") {
    const std::vector<Point2> txs = {Point2(-8, 0)};
    const std::vector<Point2> rxs = {Point2(8, 0)};
    const Point2 target(0, 0);
    Rng rng(5);
    const BlockingVector all_on = BlockingVector::full(0b1u, 1);
    CHECK(prob_lower_bound(all_on, target, txs, rxs, 0.0, 5.0, 20000, rng) ==
          doctest::Approx(1.0).epsilon(1e-12));
    const BlockingVector off = BlockingVector::full(0b0u, 1);
    CHECK(prob_lower_bound(off, target, txs, rxs, 0.0, 5.0, 20000, rng) ==
          doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("the corridor bound rejects structurally invalid vectors") {
    const std::vector<Point2> txs = {Point2(-8, 1), Point2(-8, -1)};
    const std::vector<Point2> rxs = {Point2(8, 1), Point2(8, -1)};
    Rng rng(6);
    const BlockingVector bad = BlockingVector::from_string("1001");
    CHECK_THROWS_AS(prob_lower_bound(bad, Point2(0, 0), txs, rxs, 0.0075, 5.0, 1000, rng),
                    InconsistentVector);
}

TEST_CASE("the corridor bound is tight for one channel") {
    // single channel: bound = exp(-lambda A_clear) or (1 - exp(-lambda A_corr))
    const std::vector<Point2> txs = {Point2(-6, 0)};
    const std::vector<Point2> rxs = {Point2(6, 0)};
    const Point2 target(0, 0);
    const double lambda = 0.01, width = 4.0;
    const double area = width * 6.0 * 2;  // two corridors of length 6
    Rng rng(7);
    const double p_on =
        prob_lower_bound(BlockingVector::full(1u, 1), target, txs, rxs, lambda, width, 200000, rng);
    CHECK(p_on == doctest::Approx(std::exp(-lambda * area)).epsilon(2e-2));
    const double p_off =
        prob_lower_bound(BlockingVector::full(0u, 1), target, txs, rxs, lambda, width, 200000, rng);
    // both-blocked is one minus either-clear-ish; the bound multiplies the
    // two per-node blocking terms instead
    const double per_node = 1.0 - std::exp(-lambda * width * 6.0);
    CHECK(p_off == doctest::Approx(per_node * per_node).epsilon(2e-2));
}

TEST_CASE("empirical tables are a point mass in an empty field and normalized otherwise") {
    const std::vector<Point2> txs = {Point2(-8, 1), Point2(-8, -1)};
    const std::vector<Point2> rxs = {Point2(8, 1), Point2(8, -1)};
    Rng rng(11);
    const BlockingPmf empty = empirical_pmf(Point2(0, 0), txs, rxs, 0.0, 5.0, 200, rng);
    CHECK(empty.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(empty.prob_full(BlockingVector::full(0b1111u, 4)) == doctest::Approx(1.0));

    const BlockingPmf busy = empirical_pmf(Point2(0, 0), txs, rxs, 0.02, 5.0, 4000, rng);
    CHECK(busy.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(busy.n_samples == 4000);
    // every tallied vector is structurally valid
    for (const auto& [k, p] : busy.table) {
        CHECK(p >= 0.0);
        CHECK(is_consistent(k, 2, 2));
    }
    // partial queries marginalize the table
    BlockingVector partial;
    partial.set(0, true);
    double manual = 0.0;
    for (const auto& [k, p] : busy.table)
        if (k.bit(0)) manual += p;
    CHECK(busy.prob(partial) == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("independent baseline probabilities and table") {
    IndependentBlocking prior;
    prior.p_los = 0.9;
    prior.delta = 3.0;
    CHECK(prior.p_blocked() == doctest::Approx(1.0 - 0.81).epsilon(1e-12));
    const double q = 0.81 * 2 * q_function(3.0) + 0.19;
    CHECK(prior.p_missed() == doctest::Approx(q).epsilon(1e-12));

    BlockingVector khat = BlockingVector::from_string("110");
    CHECK(prior.prob(khat) == doctest::Approx((1 - q) * (1 - q) * q).epsilon(1e-12));
    CHECK(prior.nll(khat) == doctest::Approx(-std::log((1 - q) * (1 - q) * q)).epsilon(1e-9));

    const BlockingPmf table = prior.table(2, 2);
    CHECK(table.table.size() == 16);
    CHECK(table.sum() == doctest::Approx(1.0).epsilon(1e-12));

    IndependentBlocking sure;
    sure.p_los = 1.0;
    sure.delta = 1e9;  // no gate misses either
    CHECK(sure.nll(BlockingVector::from_string("111")) == doctest::Approx(0.0));
    CHECK(std::isinf(sure.nll(BlockingVector::from_string("110"))));
}

TEST_CASE("grid moments in an empty field are exact") {
    Rng rng(17);
    const std::vector<Point2> txs = {Point2(-8, 1), Point2(-8, -1)};
    const std::vector<Point2> rxs = {Point2(8, 1), Point2(8, -1)};
    const GridStats stats =
        grid_precompute(Region{-10, 10, -10, 10}, 5.0, txs, rxs, 0.0, 5.0, 50, rng);
    CHECK(stats.nx == 4);
    CHECK(stats.ny == 4);
    CHECK(stats.num_cells() == 16);
    for (int c = 0; c < stats.num_cells(); ++c) {
        CHECK(stats.mean[c].isApprox(VecX::Ones(4), 1e-12));
        CHECK(stats.cov[c].norm() == doctest::Approx(0.0).epsilon(1e-12));
    }
    CHECK(stats.cell_of(Point2(-9.9, -9.9)) == 0);
    CHECK(stats.cell_of(Point2(9.9, 9.9)) == 15);
    CHECK(stats.cell_of(Point2(99, 99)) == 15);  // clamped
}

TEST_CASE("grid moments are Bernoulli-consistent with positive shared-leg correlation") {
    Rng rng(19);
    // both channels share the single transmitter leg
    const std::vector<Point2> txs = {Point2(0, -9)};
    const std::vector<Point2> rxs = {Point2(-9, 9), Point2(9, 9)};
    const GridStats stats =
        grid_precompute(Region{-2, 2, -2, 2}, 4.0, txs, rxs, 0.015, 5.0, 6000, rng);
    REQUIRE(stats.num_cells() == 1);
    const VecX& m = stats.mean[0];
    const MatX& c = stats.cov[0];
    for (int i = 0; i < 2; ++i) {
        CHECK(m[i] > 0.05);
        CHECK(m[i] < 0.95);
        // indicators are 0/1, so the sample variance is exactly m (1 - m)
        CHECK(c(i, i) == doctest::Approx(m[i] * (1 - m[i])).epsilon(1e-9));
    }
    CHECK(c(0, 1) > 0.01);  // blocked shared leg kills both channels together
}

TEST_CASE("mahalanobis scores distance from the cell moments") {
    const VecX mean = VecX::Zero(9);
    const MatX cov = MatX::Identity(9, 9);
    BlockingVector khat;
    for (int i = 0; i < 9; ++i) khat.set(i, true);
    CHECK(mahalanobis_score(khat, mean, cov, 0.0) == doctest::Approx(3.0).epsilon(1e-12));

    BlockingVector at_mean;
    for (int i = 0; i < 9; ++i) at_mean.set(i, false);
    CHECK(mahalanobis_score(at_mean, mean, cov, 0.0) == doctest::Approx(0.0).epsilon(1e-12));

    // only known positions participate
    BlockingVector partial;
    partial.set(2, true);
    CHECK(mahalanobis_score(partial, mean, cov, 0.0) == doctest::Approx(1.0).epsilon(1e-12));

    // hand-solved correlated 2x2 case on positions {0, 1}
    VecX m2 = VecX::Zero(9);
    MatX c2 = MatX::Identity(9, 9);
    c2(0, 0) = 0.5;
    c2(1, 1) = 0.5;
    c2(0, 1) = c2(1, 0) = 0.25;
    BlockingVector two;
    two.set(0, true);
    two.set(1, true);
    // subcovariance [[.5 .25][.25 .5]]: quadratic form for (1,1) is 8/3
    CHECK(mahalanobis_score(two, m2, c2, 0.0) ==
          doctest::Approx(std::sqrt(8.0 / 3.0)).epsilon(1e-12));

    MatX singular = MatX::Zero(9, 9);
    CHECK_THROWS_AS(mahalanobis_score(two, m2, singular, 0.0), SingularCovariance);
    CHECK(mahalanobis_score(two, m2, singular, 1e-6) > 0.0);  // regularized
}

TEST_CASE("cell-table models cache per cell and answer through the error model") {
    const std::vector<Point2> txs = {Point2(-8, 1), Point2(-8, -1)};
    const std::vector<Point2> rxs = {Point2(8, 1), Point2(8, -1)};
    const Region box{-10, 10, -10, 10};
    const ErrorRates err{0.01, 0.01};
    const EmpiricalBlockingModel model(txs, rxs, box, 0.0, 5.0, err, 1.0, 500, 42);
    CHECK(model.name() == "empirical");
    CHECK(model.enforces_consistency());
    CHECK(model.nll_is_monotone());

    // empty field: all-on is near-certain, so its score is near zero
    BlockingVector all_on = BlockingVector::full(0b1111u, 4);
    const double s = model.nll(all_on, Point2(0.2, 0.3));
    CHECK(s == doctest::Approx(-std::log((1 - 0.01) * (1 - 0.01) * (1 - 0.01) * (1 - 0.01)))
                   .epsilon(1e-9));
    // vectors two flips from the point mass are impossible
    CHECK(std::isinf(model.nll(BlockingVector::full(0b0011u, 4), Point2(0.2, 0.3))));

    // the same cell serves nearby queries
    const BlockingPmf& t1 = model.cell_table(Point2(0.2, 0.3));
    const BlockingPmf& t2 = model.cell_table(Point2(0.3, 0.2));
    CHECK(&t1 == &t2);
    const BlockingPmf& t3 = model.cell_table(Point2(3.7, 0.2));
    CHECK(&t1 != &t3);
}

TEST_CASE("the bound-backed model scores like the empirical one in easy cases") {
    const std::vector<Point2> txs = {Point2(-8, 0)};
    const std::vector<Point2> rxs = {Point2(8, 0)};
    const Region box{-10, 10, -10, 10};
    const LowerBoundBlockingModel model(txs, rxs, box, 0.0, 5.0, ErrorRates{0.0, 0.0}, 1.0,
                                        2000, 42);
    CHECK(model.name() == "lower-bound");
    CHECK(model.nll(BlockingVector::full(1u, 1), Point2(0, 0)) ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::isinf(model.nll(BlockingVector::full(0u, 1), Point2(0, 0))));
}

}  // TEST_SUITE
