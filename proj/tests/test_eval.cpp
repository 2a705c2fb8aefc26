#include <doctest.h>

#include <cmath>

#include "blockloc/eval.hpp"

using namespace blockloc;

namespace {

SceneConfig fixed_clear_config() {
    SceneConfig cfg;
    cfg.region = Region{-10, 10, -10, 10};
    cfg.intensity = 0.0;  // nothing to block any path
    cfg.fixed_txs = {Point2(-8, 7), Point2(-7, 8), Point2(7, 7)};
    cfg.fixed_rxs = {Point2(-7, 7), Point2(8, 7), Point2(7, 8)};
    cfg.fixed_targets = {Point2(0, 0), Point2(0, 5)};
    return cfg;
}

bool rows_equal(const RealizationRecord& a, const RealizationRecord& b) {
    return a.realization == b.realization && a.delta == b.delta && a.mu == b.mu &&
           a.phi == b.phi && a.t_true == b.t_true && a.t_hat == b.t_hat &&
           a.detected == b.detected && a.false_alarms == b.false_alarms &&
           a.genie_detected == b.genie_detected && a.placement_failed == b.placement_failed;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("radius scoring counts hits and ghosts") {
    const std::vector<Point2> targets = {Point2(0, 0), Point2(5, 5)};

    SUBCASE("exact hits") {
        const auto s = score({Point2(0.05, 0), Point2(5, 5.05)}, targets, 0.1);
        CHECK(s.detected == 2);
        CHECK(s.false_alarms == 0);
    }
    SUBCASE("one hit, one ghost") {
        const auto s = score({Point2(0, 0), Point2(-5, -5)}, targets, 0.1);
        CHECK(s.detected == 1);
        CHECK(s.false_alarms == 1);
    }
    SUBCASE("no estimates") {
        const auto s = score({}, targets, 0.1);
        CHECK(s.detected == 0);
        CHECK(s.false_alarms == 0);
    }
    SUBCASE("no targets: everything is a ghost") {
        const auto s = score({Point2(0, 0), Point2(1, 1)}, {}, 0.1);
        CHECK(s.detected == 0);
        CHECK(s.false_alarms == 2);
    }
    SUBCASE("two estimates on one target count once") {
        const auto s = score({Point2(0.01, 0), Point2(-0.01, 0)}, targets, 0.1);
        CHECK(s.detected == 1);
        CHECK(s.false_alarms == 0);
    }
    SUBCASE("boundary distance is inside") {
        const auto s = score({Point2(0.1, 0)}, targets, 0.1);
        CHECK(s.detected == 1);
        CHECK(s.false_alarms == 0);
    }
}

TEST_CASE("clear-world ensemble detects everything with no ghosts") {
    EnsembleParams params;
    params.scene = fixed_clear_config();
    params.signal.sigma = 0.01;
    params.signal.noise_rate = 0.0;
    params.algo.sigma = 0.01;
    params.algo.delta = 6.0;
    params.algo.mu = 6.0;
    params.model.kind = ModelKind::independent;
    params.model.p_los = 1.0;
    params.n_realizations = 20;
    params.seed = 21;
    params.radius = 0.5;
    params.with_genie = true;

    const EnsembleReport rep = run_ensemble(params);
    REQUIRE(rep.summaries.size() == 1);
    const SweepSummary& s = rep.summaries[0];
    CHECK(s.p_d == doctest::Approx(1.0));
    CHECK(s.p_f == doctest::Approx(0.0));
    CHECK(s.genie_p_d == doctest::Approx(1.0));
    CHECK(s.zero_denominator_count == 0);
    CHECK(s.failures == 0);
    CHECK(s.p_d_se == doctest::Approx(0.0));
    REQUIRE(rep.rows.size() == 20);
    for (const auto& row : rep.rows) {
        CHECK(row.t_true == 2);
        CHECK(row.t_hat == 2);
        CHECK(row.detected == 2);
        CHECK(row.false_alarms == 0);
        CHECK(row.genie_detected == 2);
        CHECK_FALSE(row.placement_failed);
    }
    CHECK(rep.wall_seconds > 0.0);
}

TEST_CASE("ensemble output is reproducible and thread-count independent") {
    EnsembleParams params;
    params.scene.region = Region{-10, 10, -10, 10};
    params.signal.sigma = 0.01;
    params.algo.sigma = 0.01;
    params.model.kind = ModelKind::independent;
    params.model.p_los = 0.9;
    params.n_realizations = 8;
    params.seed = 33;
    params.with_genie = true;

    const EnsembleReport a = run_ensemble(params);
    const EnsembleReport b = run_ensemble(params);
    params.threads = 2;
    const EnsembleReport c = run_ensemble(params);

    REQUIRE(a.rows.size() == 8);
    REQUIRE(b.rows.size() == 8);
    REQUIRE(c.rows.size() == 8);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(rows_equal(a.rows[i], b.rows[i]));
        CHECK(rows_equal(a.rows[i], c.rows[i]));
    }
    CHECK(a.summaries[0].p_d == b.summaries[0].p_d);
    CHECK(a.summaries[0].p_d == c.summaries[0].p_d);
    CHECK(a.summaries[0].p_f == c.summaries[0].p_f);
}

TEST_CASE("sweep shares one world across its points") {
    EnsembleParams params;
    params.scene = fixed_clear_config();
    params.signal.sigma = 0.01;
    params.signal.noise_rate = 0.0;
    params.algo.sigma = 0.01;
    params.model.kind = ModelKind::independent;
    params.model.p_los = 1.0;
    params.n_realizations = 5;
    params.seed = 34;
    params.radius = 0.5;

    SweepPoint easy;  // generous gates
    easy.delta = 6.0;
    easy.mu = 8.0;
    SweepPoint impossible;  // a gate nothing can pass
    impossible.delta = 6.0;
    impossible.mu = -5.0;

    const EnsembleReport rep = run_ensemble_sweep(params, {easy, impossible});
    REQUIRE(rep.rows.size() == 10);
    REQUIRE(rep.summaries.size() == 2);
    CHECK(rep.summaries[0].p_d == doctest::Approx(1.0));
    CHECK(rep.summaries[1].p_d == doctest::Approx(0.0));
    CHECK(rep.summaries[1].p_f == doctest::Approx(0.0));
    CHECK(rep.summaries[1].zero_denominator_count == 5);
    // rows interleave the two points per realization
    for (int r = 0; r < 5; ++r) {
        CHECK(rep.rows[r * 2].mu == 8.0);
        CHECK(rep.rows[r * 2 + 1].mu == -5.0);
        CHECK(rep.rows[r * 2 + 1].t_hat == 0);
    }
}

TEST_CASE("placement failures are reported, not aggregated") {
    EnsembleParams params;
    params.scene.region = Region{-10, 10, -10, 10};
    params.scene.intensity = 10.0;  // scatterers swallow the whole region
    params.model.kind = ModelKind::independent;
    params.model.p_los = 0.9;
    params.n_realizations = 4;
    params.seed = 35;

    const EnsembleReport rep = run_ensemble(params);
    REQUIRE(rep.summaries.size() == 1);
    CHECK(rep.summaries[0].failures == 4);
    CHECK(rep.summaries[0].p_d == 0.0);
    CHECK(rep.summaries[0].zero_denominator_count == 0);
    for (const auto& row : rep.rows) CHECK(row.placement_failed);
}

TEST_CASE("clear-path count distribution is a point mass without scatterers") {
    SceneConfig cfg;
    cfg.region = Region{-10, 10, -10, 10};
    cfg.intensity = 0.0;
    const auto pmf = dp_count_distribution(cfg, 50, 77);
    REQUIRE(pmf.size() == 10);
    CHECK(pmf[9] == doctest::Approx(1.0));
    for (int i = 0; i < 9; ++i) CHECK(pmf[i] == 0.0);
}

TEST_CASE("clear-path count distribution under the memoryless baseline") {
    const IndependentBlocking prior{0.9, 3.0};
    const auto pmf = dp_count_distribution(prior, 9);
    REQUIRE(pmf.size() == 10);
    double sum = 0.0;
    for (double p : pmf) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    const double pd = 1.0 - prior.p_missed();
    CHECK(pmf[9] == doctest::Approx(std::pow(pd, 9)).epsilon(1e-12));
    CHECK(pmf[0] == doctest::Approx(std::pow(prior.p_missed(), 9)).epsilon(1e-12));
    // agrees with the generic binomial table
    const auto ref = binomial_pmf(9, pd);
    for (int i = 0; i <= 9; ++i) CHECK(pmf[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("truth-guided benchmark nails the clear world") {
    SceneConfig cfg = fixed_clear_config();
    Rng rng = make_stream(99, 0, stream::scene);
    const Scene s = sample_scene(cfg, rng);
    const GroundTruth truth = ground_truth_blocking(s);
    SignalParams sig;
    sig.sigma = 0.001;
    sig.noise_rate = 1.0;  // clutter must not disturb a truth-labeled fit
    Rng grng = make_stream(99, 0, stream::signal);
    const MpcSet mpcs = generate_mpcs(s, truth, sig, grng);

    const IndependentBlockingModel model(IndependentBlocking{1.0, 3.0});
    AlgoParams params;
    params.sigma = sig.sigma;
    params.mu = 6.0;

    const MtlResult res = genie_run(mpcs, s, truth, model, params);
    REQUIRE(res.t_hat() == 2);
    for (int t = 0; t < 2; ++t) {
        double best = 1e9;
        for (const Point2& p : res.points()) best = std::min(best, (p - s.targets[t]).norm());
        CHECK(best <= 0.01);
    }
    for (const Matching& m : res.estimates) {
        CHECK(m.size() == 9);
        CHECK(m.khat == BlockingVector::full(0b111111111, 9));
    }
    CHECK(res.objective < 0.0);
}

TEST_CASE("model factory honors the configured kind") {
    SceneConfig scfg;
    scfg.region = Region{-10, 10, -10, 10};
    const Network net{{Point2(-8, 7), Point2(7, 7)}, {Point2(-7, 7), Point2(7, 8)}};

    ModelParams mp;
    mp.n_samples = 50;
    mp.n_area = 200;
    mp.grid_resolution = 10.0;
    mp.grid_samples = 50;

    mp.kind = ModelKind::empirical;
    CHECK(build_model(mp, scfg, net, 3.0, 1)->name() == "empirical");
    mp.kind = ModelKind::lower_bound;
    CHECK(build_model(mp, scfg, net, 3.0, 1)->name() == "lower-bound");
    mp.kind = ModelKind::independent;
    CHECK(build_model(mp, scfg, net, 3.0, 1)->name() == "independent");
    mp.kind = ModelKind::grid;
    CHECK(build_model(mp, scfg, net, 3.0, 1)->name() == "grid");
}

TEST_CASE("memoryless prior leg-clear chance: explicit or derived") {
    ModelParams mp;
    mp.p_los = 0.7;
    CHECK(mp.resolved_p_los(0.0075, 5.0) == doctest::Approx(0.7));

    mp.p_los = -1.0;
    mp.d_avg = 10.0;
    CHECK(mp.resolved_p_los(0.0075, 5.0) ==
          doctest::Approx(std::exp(-0.0075 * 5.0 * 10.0)).epsilon(1e-12));

    mp.d_avg = 0.0;  // no corridor at all: always clear
    CHECK(mp.resolved_p_los(0.0075, 5.0) == doctest::Approx(1.0));
}

}  // TEST_SUITE
