#include "blockloc/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>

#include "blockloc/blocking.hpp"

namespace blockloc {

namespace {

double bernoulli_se(double p, double n) {
    return n > 0.0 ? std::sqrt(std::max(0.0, p * (1.0 - p)) / n) : 0.0;
}

int clamped_threads(int requested) {
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    return std::clamp(requested, 1, std::max(1, hw > 0 ? hw : 1));
}

/// Runs `body(index)` for index in [0, n) on a fixed-size worker pool.
/// Exceptions propagate (first one wins).
template <typename Body>
void parallel_for(int n, int threads, Body&& body) {
    threads = std::min(clamped_threads(threads), std::max(1, n));
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

ScorePair score(const std::vector<Point2>& estimates, const std::vector<Point2>& targets,
                double radius) {
    ScorePair out;
    for (const Point2& t : targets)
        for (const Point2& e : estimates)
            if ((e - t).norm() <= radius) {
                ++out.detected;
                break;
            }
    for (const Point2& e : estimates) {
        bool near_target = false;
        for (const Point2& t : targets)
            if ((e - t).norm() <= radius) {
                near_target = true;
                break;
            }
        if (!near_target) ++out.false_alarms;
    }
    return out;
}

double ModelParams::resolved_p_los(double intensity, double width) const {
    if (p_los >= 0.0) return p_los;
    return std::exp(-intensity * width * d_avg);
}

std::unique_ptr<BlockingModel> build_model(const ModelParams& mp, const SceneConfig& scfg,
                                           const Network& net, double delta, std::uint64_t seed) {
    ErrorRates err;
    err.rho01 = mp.rho01 >= 0.0 ? mp.rho01 : 2.0 * q_function(delta);
    err.rho10 = mp.rho10 >= 0.0 ? mp.rho10 : 2.0 * q_function(delta);
    switch (mp.kind) {
        case ModelKind::empirical:
            return std::make_unique<EmpiricalBlockingModel>(net.txs, net.rxs, scfg.region,
                                                            scfg.intensity, scfg.diameter, err,
                                                            mp.cell_size, mp.n_samples, seed);
        case ModelKind::lower_bound:
            return std::make_unique<LowerBoundBlockingModel>(net.txs, net.rxs, scfg.region,
                                                             scfg.intensity, scfg.diameter, err,
                                                             mp.cell_size, mp.n_area, seed);
        case ModelKind::independent: {
            IndependentBlocking prior;
            prior.p_los = mp.resolved_p_los(scfg.intensity, scfg.diameter);
            prior.delta = delta;
            return std::make_unique<IndependentBlockingModel>(prior);
        }
        case ModelKind::grid: {
            Rng rng = make_stream(seed, 0, stream::model);
            GridStats stats =
                grid_precompute(scfg.region, mp.grid_resolution, net.txs, net.rxs, scfg.intensity,
                                scfg.diameter, mp.grid_samples, rng);
            return std::make_unique<GridBlockingModel>(std::move(stats), mp.eps);
        }
    }
    throw ConfigError("unknown blocking model kind");
}

EnsembleReport run_ensemble_sweep(const EnsembleParams& params,
                                  const std::vector<SweepPoint>& points) {
    const auto t_begin = std::chrono::steady_clock::now();
    const int n = params.n_realizations;
    const int np = static_cast<int>(points.size());
    EnsembleReport report;
    report.rows.resize(static_cast<std::size_t>(n) * np);

    const SceneConfig& scfg = params.scene;
    const bool fixed_nodes =
        static_cast<int>(scfg.fixed_txs.size()) == scfg.num_tx &&
        static_cast<int>(scfg.fixed_rxs.size()) == scfg.num_rx && scfg.num_tx > 0 &&
        scfg.num_rx > 0;

    // With a fixed node layout the prior does not depend on the realization;
    // build it once per distinct gate width and share it (cell caches are
    // thread-safe and scheduling-independent).
    std::map<double, std::unique_ptr<BlockingModel>> shared_models;
    if (fixed_nodes) {
        const Network net{scfg.fixed_txs, scfg.fixed_rxs};
        for (const SweepPoint& pt : points)
            if (!shared_models.count(pt.delta))
                shared_models[pt.delta] = build_model(params.model, scfg, net, pt.delta,
                                                      derive_seed(params.seed, 0, stream::model));
    }

    parallel_for(n, params.threads, [&](int r) {
        RealizationRecord blank;
        blank.realization = r;

        Scene scene;
        bool failed = false;
        try {
            Rng rng = make_stream(params.seed, static_cast<std::uint64_t>(r), stream::scene);
            scene = sample_scene(scfg, rng);
        } catch (const PlacementFailure&) {
            failed = true;
        }
        if (failed) {
            for (int pi = 0; pi < np; ++pi) {
                RealizationRecord row = blank;
                row.delta = points[pi].delta;
                row.mu = points[pi].mu;
                row.phi = points[pi].phi;
                row.placement_failed = true;
                report.rows[static_cast<std::size_t>(r) * np + pi] = row;
            }
            return;
        }

        GroundTruth truth = ground_truth_blocking(scene);
        {
            Rng rng =
                make_stream(params.seed, static_cast<std::uint64_t>(r), stream::indirect_paths);
            ground_truth_ips(scene, truth, params.ip_policy, params.p_ip, rng);
        }
        MpcSet mpcs;
        {
            Rng rng = make_stream(params.seed, static_cast<std::uint64_t>(r), stream::signal);
            mpcs = generate_mpcs(scene, truth, params.signal, rng);
        }
        const Network net = scene.network();

        std::map<double, std::unique_ptr<BlockingModel>> local_models;
        auto model_for = [&](double delta) -> const BlockingModel& {
            if (fixed_nodes) return *shared_models.at(delta);
            auto& slot = local_models[delta];
            if (!slot)
                slot = build_model(params.model, scfg, net, delta,
                                   derive_seed(params.seed, static_cast<std::uint64_t>(r),
                                               stream::model));
            return *slot;
        };

        for (int pi = 0; pi < np; ++pi) {
            const SweepPoint& pt = points[pi];
            AlgoParams algo = params.algo;
            algo.delta = pt.delta;
            algo.mu = pt.mu;
            algo.sigma = params.signal.sigma;
            if (algo.order == OrderStrategy::shuffled)
                algo.order_seed =
                    derive_seed(params.seed, static_cast<std::uint64_t>(r), stream::order);

            const BlockingModel& model = model_for(pt.delta);
            const auto t0 = std::chrono::steady_clock::now();
            MtlResult res;
            if (pt.size_gate) {
                IndependentBlocking prior;
                prior.p_los = params.model.resolved_p_los(scfg.intensity, scfg.diameter);
                prior.delta = pt.delta;
                res = run_size_threshold_baseline(mpcs, net, prior, algo, pt.phi);
            } else {
                res = run_bayesian_mtl(mpcs, net, model, algo);
            }
            const double radius =
                params.radius > 0.0 ? params.radius : 3.0 * params.signal.sigma;
            const ScorePair sp = score(res.points(), scene.targets, radius);

            RealizationRecord row = blank;
            row.delta = pt.delta;
            row.mu = pt.mu;
            row.phi = pt.phi;
            row.t_true = static_cast<int>(scene.targets.size());
            row.t_hat = res.t_hat();
            row.detected = sp.detected;
            row.false_alarms = sp.false_alarms;
            row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                              .count();
            if (params.with_genie) {
                MtlResult genie = genie_run(mpcs, scene, truth, model, algo);
                row.genie_detected = score(genie.points(), scene.targets, radius).detected;
            }
            report.rows[static_cast<std::size_t>(r) * np + pi] = row;
        }
    });

    for (int pi = 0; pi < np; ++pi) {
        SweepSummary s;
        s.point = points[pi];
        long t_true = 0, detected = 0, t_hat = 0, fa = 0, genie = 0;
        for (int r = 0; r < n; ++r) {
            const RealizationRecord& row = report.rows[static_cast<std::size_t>(r) * np + pi];
            if (row.placement_failed) {
                ++s.failures;
                continue;
            }
            t_true += row.t_true;
            detected += row.detected;
            t_hat += row.t_hat;
            fa += row.false_alarms;
            if (row.t_hat == 0) ++s.zero_denominator_count;
            if (row.genie_detected >= 0) genie += row.genie_detected;
        }
        s.p_d = t_true > 0 ? static_cast<double>(detected) / t_true : 0.0;
        s.p_f = t_hat > 0 ? static_cast<double>(fa) / t_hat : 0.0;
        s.p_d_se = bernoulli_se(s.p_d, static_cast<double>(t_true));
        s.p_f_se = bernoulli_se(s.p_f, static_cast<double>(t_hat));
        if (params.with_genie && t_true > 0) s.genie_p_d = static_cast<double>(genie) / t_true;
        report.summaries.push_back(s);
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    return report;
}

EnsembleReport run_ensemble(const EnsembleParams& params) {
    SweepPoint pt;
    pt.delta = params.algo.delta;
    pt.mu = params.algo.mu;
    return run_ensemble_sweep(params, {pt});
}

std::vector<double> dp_count_distribution(const SceneConfig& cfg, int n, std::uint64_t seed,
                                          int threads) {
    const int num_trps = cfg.num_tx * cfg.num_rx;
    std::vector<long> hist(num_trps + 1, 0);
    std::mutex hist_mutex;
    parallel_for(n, threads, [&](int r) {
        std::vector<long> local(num_trps + 1, 0);
        try {
            Rng rng = make_stream(seed, static_cast<std::uint64_t>(r), stream::scene);
            const Scene scene = sample_scene(cfg, rng);
            const GroundTruth truth = ground_truth_blocking(scene);
            for (int t = 0; t < truth.k.cols(); ++t) ++local[truth.k.col(t).sum()];
        } catch (const PlacementFailure&) {
            return;  // this scene contributes nothing
        }
        std::lock_guard lock(hist_mutex);
        for (int c = 0; c <= num_trps; ++c) hist[c] += local[c];
    });
    long total = 0;
    for (long h : hist) total += h;
    std::vector<double> pmf(num_trps + 1, 0.0);
    if (total > 0)
        for (int c = 0; c <= num_trps; ++c)
            pmf[c] = static_cast<double>(hist[c]) / static_cast<double>(total);
    return pmf;
}

std::vector<double> dp_count_distribution(const IndependentBlocking& prior, int num_trps) {
    return binomial_pmf(num_trps, 1.0 - prior.p_missed());
}

MtlResult genie_run(const MpcSet& mpcs, const Scene& scene, const GroundTruth& truth,
                    const BlockingModel& model, const AlgoParams& params) {
    const Network net = scene.network();
    const int num_trps = mpcs.num_trps;
    StageGate gate;
    gate.mu = params.mu;

    MtlResult result;
    for (int t = 0; t < static_cast<int>(scene.targets.size()); ++t) {
        Matching m;
        m.id = t;
        for (int i = 1; i <= num_trps; ++i) m.khat.set(i - 1, truth.k(i - 1, t) == 1);
        for (int i = 1; i <= num_trps; ++i) {
            if (truth.k(i - 1, t) != 1) continue;
            const auto& peaks = mpcs.at(i);
            int found = -1;
            for (int j = 0; j < static_cast<int>(peaks.size()) && found < 0; ++j) {
                const MpcLabel& lab = peaks[j].label;
                if (lab.kind == MpcKind::direct && lab.target == t) {
                    found = j;
                } else if (lab.kind == MpcKind::merged) {
                    for (const MpcLabel& part : lab.parts)
                        if (part.kind == MpcKind::direct && part.target == t) {
                            found = j;
                            break;
                        }
                }
            }
            if (found >= 0) m.entries.push_back(MatchEntry{i, found});
        }
        if (static_cast<int>(m.entries.size()) < 2) continue;
        std::vector<RangeEllipse> obs;
        obs.reserve(m.entries.size());
        for (const MatchEntry& e : m.entries)
            obs.push_back(RangeEllipse{net.trp(e.trp), mpcs.at(e.trp)[e.mpc].range});
        try {
            m.estimate = nls_estimate(obs, scene.targets[t], params.sigma);
        } catch (const SingularGeometry&) {
            continue;
        }
        m.blocking_nll = model.nll(m.khat, m.estimate.point);
        if (!gate.admits(m.khat, m.blocking_nll)) continue;
        result.objective += selection_objective(m, mpcs, net, model, params.sigma);
        result.estimates.push_back(std::move(m));
    }
    return result;
}

}  // namespace blockloc
