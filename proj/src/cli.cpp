#include "blockloc/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "blockloc/config.hpp"
#include "blockloc/eval.hpp"
#include "blockloc/io.hpp"
#include "blockloc/mtl.hpp"

namespace blockloc::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Options shared by the subcommands, plus presence markers so that only
/// flags the user actually passed override the config file.
struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    int realizations = 0;
    int threads = 0;
    double delta = 0.0;
    double mu = 0.0;
    int phi = -1;
    std::string model_kind;
    bool genie = false;
    bool size_gate = false;

    CLI::Option* config_opt = nullptr;
    CLI::Option* out_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* realizations_opt = nullptr;
    CLI::Option* threads_opt = nullptr;
    CLI::Option* delta_opt = nullptr;
    CLI::Option* mu_opt = nullptr;
    CLI::Option* phi_opt = nullptr;
    CLI::Option* model_opt = nullptr;
    CLI::Option* genie_opt = nullptr;
    CLI::Option* size_gate_opt = nullptr;
};

void add_common(CLI::App* sub, CommonOpts& o) {
    o.config_opt = sub->add_option("--config", o.config_path, "JSON config file");
    o.out_opt = sub->add_option("--out", o.out_dir,
                                "output directory (overrides BLOCKLOC_OUT and the config)");
    o.seed_opt = sub->add_option("--seed", o.seed, "master seed override");
    o.realizations_opt =
        sub->add_option("--realizations", o.realizations, "realization count override");
    o.threads_opt = sub->add_option("--threads", o.threads, "worker thread count override");
    o.delta_opt = sub->add_option("--delta", o.delta, "residual gate width override");
    o.mu_opt = sub->add_option("--mu", o.mu, "prior-score gate override");
    o.phi_opt = sub->add_option("--phi", o.phi, "allowed missing-peak count (baseline gate)");
    o.model_opt = sub->add_option(
        "--model", o.model_kind,
        "blocking prior: empirical, lower_bound, independent (alias icb) or grid");
    o.genie_opt = sub->add_flag("--genie", o.genie, "also run the truth-association benchmark");
    o.size_gate_opt =
        sub->add_flag("--size-gate", o.size_gate, "gate by peak count instead of prior score");
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "empirical") return ModelKind::empirical;
    if (s == "lower_bound") return ModelKind::lower_bound;
    if (s == "independent" || s == "icb") return ModelKind::independent;
    if (s == "grid") return ModelKind::grid;
    throw ConfigError("unknown model kind '" + s +
                      "': expected empirical, lower_bound, independent, icb or grid");
}

RunConfig resolve(const CommonOpts& o) {
    RunConfig cfg = o.config_opt->count() ? load_config(o.config_path) : default_config();
    if (o.seed_opt->count()) cfg.ens.seed = o.seed;
    if (o.realizations_opt->count()) {
        if (o.realizations <= 0) throw ConfigError("--realizations must be positive");
        cfg.ens.n_realizations = o.realizations;
    }
    if (o.threads_opt->count()) {
        if (o.threads <= 0) throw ConfigError("--threads must be positive");
        cfg.ens.threads = o.threads;
    }
    if (o.delta_opt->count()) cfg.ens.algo.delta = o.delta;
    if (o.mu_opt->count()) cfg.ens.algo.mu = o.mu;
    if (o.phi_opt->count()) cfg.phi = o.phi;
    if (o.model_opt->count()) cfg.ens.model.kind = model_kind_from_string(o.model_kind);
    if (o.genie_opt->count()) cfg.ens.with_genie = true;
    if (o.size_gate_opt->count()) cfg.size_gate = true;
    if (o.out_opt->count()) {
        cfg.output_dir = o.out_dir;
    } else if (const char* env = std::getenv("BLOCKLOC_OUT"); env && *env) {
        cfg.output_dir = env;
    }
    return cfg;
}

std::string ensure_out_dir(const RunConfig& cfg) {
    fs::create_directories(cfg.output_dir);
    return cfg.output_dir;
}

struct World {
    Scene scene;
    GroundTruth truth;
    MpcSet mpcs;
};

/// Rebuilds the world of one ensemble realization from the master seed.
World make_world(const EnsembleParams& p, int realization) {
    World w;
    {
        Rng rng = make_stream(p.seed, static_cast<std::uint64_t>(realization), stream::scene);
        w.scene = sample_scene(p.scene, rng);
    }
    w.truth = ground_truth_blocking(w.scene);
    {
        Rng rng =
            make_stream(p.seed, static_cast<std::uint64_t>(realization), stream::indirect_paths);
        ground_truth_ips(w.scene, w.truth, p.ip_policy, p.p_ip, rng);
    }
    {
        Rng rng = make_stream(p.seed, static_cast<std::uint64_t>(realization), stream::signal);
        w.mpcs = generate_mpcs(w.scene, w.truth, p.signal, rng);
    }
    return w;
}

void write_outputs(const RunConfig& cfg, const EnsembleReport& report) {
    const std::string dir = ensure_out_dir(cfg);
    write_runs_csv(dir + "/runs.csv", report, cfg);
    write_roc_csv(dir + "/roc.csv", report, cfg);
    write_summary_json(dir + "/summary.json", report, cfg);
    for (const SweepSummary& s : report.summaries) {
        std::cout << "delta=" << s.point.delta;
        if (s.point.size_gate)
            std::cout << " phi=" << s.point.phi;
        else
            std::cout << " mu=" << s.point.mu;
        std::cout << "  p_d=" << s.p_d << " (se " << s.p_d_se << ")  p_f=" << s.p_f << " (se "
                  << s.p_f_se << ")";
        if (s.genie_p_d >= 0.0) std::cout << "  genie_p_d=" << s.genie_p_d;
        if (s.failures > 0) std::cout << "  placement_failures=" << s.failures;
        std::cout << "\n";
    }
    std::cout << "wrote " << dir << "/runs.csv, roc.csv, summary.json ("
              << report.wall_seconds << " s)\n";
}

int cmd_simulate(const CommonOpts& o, const std::string& save_replay, bool strip_labels) {
    RunConfig cfg = resolve(o);
    SweepPoint pt;
    pt.delta = cfg.ens.algo.delta;
    pt.mu = cfg.ens.algo.mu;
    pt.size_gate = cfg.size_gate;
    pt.phi = cfg.phi;
    if (pt.size_gate && pt.phi < 0)
        throw ConfigError("the peak-count gate needs a non-negative phi");
    const EnsembleReport report = run_ensemble_sweep(cfg.ens, {pt});
    write_outputs(cfg, report);
    if (!save_replay.empty()) {
        const World w = make_world(cfg.ens, 0);
        write_text_file(save_replay, replay_to_json(w.scene, w.mpcs, strip_labels).dump(2) + "\n");
        std::cout << "wrote replay of realization 0 to " << save_replay << "\n";
    }
    return 0;
}

int cmd_roc(const CommonOpts& o) {
    RunConfig cfg = resolve(o);
    std::vector<double> deltas = cfg.sweep.delta;
    if (deltas.empty()) deltas = {cfg.ens.algo.delta};
    std::vector<SweepPoint> points;
    if (cfg.size_gate) {
        if (cfg.sweep.phi.empty())
            throw ConfigError("sweep.phi is empty but the peak-count gate is selected");
        for (double d : deltas)
            for (int phi : cfg.sweep.phi) {
                SweepPoint pt;
                pt.delta = d;
                pt.phi = phi;
                pt.size_gate = true;
                points.push_back(pt);
            }
    } else {
        if (cfg.sweep.mu.empty()) throw ConfigError("sweep.mu is empty");
        for (double d : deltas)
            for (double mu : cfg.sweep.mu) {
                SweepPoint pt;
                pt.delta = d;
                pt.mu = mu;
                points.push_back(pt);
            }
    }
    const EnsembleReport report = run_ensemble_sweep(cfg.ens, points);
    write_outputs(cfg, report);
    return 0;
}

int cmd_blocking_stats(const CommonOpts& o, int scenes) {
    RunConfig cfg = resolve(o);
    if (scenes <= 0) throw ConfigError("--scenes must be positive");
    const int num_trps = cfg.ens.scene.num_tx * cfg.ens.scene.num_rx;
    const std::vector<double> sampled =
        dp_count_distribution(cfg.ens.scene, scenes, cfg.ens.seed, cfg.ens.threads);
    IndependentBlocking prior;
    prior.p_los =
        cfg.ens.model.resolved_p_los(cfg.ens.scene.intensity, cfg.ens.scene.diameter);
    prior.delta = cfg.ens.algo.delta;
    const std::vector<double> binomial = dp_count_distribution(prior, num_trps);

    std::cout << "per-target unobstructed-channel count over " << scenes << " scenes\n";
    std::cout << "count  sampled   independent\n";
    for (int c = 0; c <= num_trps; ++c)
        std::cout << c << "      " << sampled[c] << "   " << binomial[c] << "\n";

    json j;
    j["config"] = config_to_json(cfg);
    j["scenes"] = scenes;
    j["sampled"] = sampled;
    j["independent"] = binomial;
    const std::string dir = ensure_out_dir(cfg);
    write_text_file(dir + "/blocking_stats.json", j.dump(2) + "\n");
    std::cout << "wrote " << dir << "/blocking_stats.json\n";
    return 0;
}

int cmd_oracle_compare(const CommonOpts& o) {
    RunConfig cfg = resolve(o);
    const OracleParams& op = cfg.oracle;
    AlgoParams algo = cfg.ens.algo;
    algo.sigma = cfg.ens.signal.sigma;
    const double radius = cfg.ens.radius > 0.0 ? cfg.ens.radius : 3.0 * cfg.ens.signal.sigma;

    int attempted = 0, compared = 0, agreements = 0, violations = 0, skipped = 0;
    double worst_gap = 0.0;  // most negative (algo below oracle)
    for (int r = 0; r < op.instances; ++r) {
        ++attempted;
        SceneConfig sc = cfg.ens.scene;
        sc.num_tx = op.num_tx;
        sc.num_rx = op.num_rx;
        sc.num_targets = 1 + (r % std::max(1, op.max_targets));
        sc.fixed_txs.clear();
        sc.fixed_rxs.clear();
        sc.fixed_targets.clear();
        Scene scene;
        try {
            Rng rng = make_stream(cfg.ens.seed, static_cast<std::uint64_t>(r), stream::scene);
            scene = sample_scene(sc, rng);
        } catch (const PlacementFailure&) {
            ++skipped;
            continue;
        }
        GroundTruth truth = ground_truth_blocking(scene);
        MpcSet mpcs;
        bool small_enough = false;
        for (int attempt = 0; attempt < 50 && !small_enough; ++attempt) {
            Rng rng = make_stream(cfg.ens.seed,
                                  static_cast<std::uint64_t>(r) * 64 + attempt, stream::signal);
            mpcs = generate_mpcs(scene, truth, cfg.ens.signal, rng);
            small_enough = true;
            for (const auto& peaks : mpcs.per_trp)
                if (static_cast<int>(peaks.size()) > op.max_mpcs) small_enough = false;
        }
        if (!small_enough) {
            ++skipped;
            continue;
        }
        const Network net = scene.network();
        const auto model =
            build_model(cfg.ens.model, sc, net, algo.delta,
                        derive_seed(cfg.ens.seed, static_cast<std::uint64_t>(r), stream::model));
        MtlResult res = run_bayesian_mtl(mpcs, net, *model, algo);
        BruteForceResult oracle;
        try {
            oracle = brute_force_p3(mpcs, net, *model, algo, op.max_targets, op.guard);
        } catch (const InstanceTooLarge&) {
            ++skipped;
            continue;
        }
        ++compared;
        const double gap = res.objective - oracle.objective;
        if (gap < worst_gap) worst_gap = gap;
        if (gap < -1e-9) ++violations;
        bool agree = res.t_hat() == static_cast<int>(oracle.matchings.size());
        if (agree) {
            std::vector<bool> used(oracle.matchings.size(), false);
            for (const Matching& m : res.estimates) {
                bool found = false;
                for (std::size_t i = 0; i < oracle.matchings.size(); ++i) {
                    if (used[i]) continue;
                    if ((oracle.matchings[i].estimate.point - m.estimate.point).norm() <=
                        radius) {
                        used[i] = true;
                        found = true;
                        break;
                    }
                }
                if (!found) agree = false;
            }
        }
        if (agree) ++agreements;
    }
    const double rate = compared > 0 ? static_cast<double>(agreements) / compared : 0.0;
    std::cout << "oracle comparison: " << compared << " of " << attempted
              << " instances compared (" << skipped << " skipped), agreement " << rate
              << ", objective violations " << violations << ", worst gap " << worst_gap << "\n";

    json j;
    j["config"] = config_to_json(cfg);
    j["attempted"] = attempted;
    j["compared"] = compared;
    j["skipped"] = skipped;
    j["agreements"] = agreements;
    j["agreement_rate"] = rate;
    j["objective_violations"] = violations;
    j["worst_gap"] = worst_gap;
    const std::string dir = ensure_out_dir(cfg);
    write_text_file(dir + "/oracle.json", j.dump(2) + "\n");
    std::cout << "wrote " << dir << "/oracle.json\n";
    return 0;
}

int cmd_replay(const CommonOpts& o, const std::string& in_path) {
    RunConfig cfg = resolve(o);
    const json j = json::parse(read_text_file(in_path));
    const Scene scene = scene_from_json(j.at("scene"));
    const MpcSet mpcs = mpcs_from_json(j.at("mpcs"));
    const Network net = scene.network();

    SceneConfig sc = cfg.ens.scene;
    sc.region = scene.region;
    AlgoParams algo = cfg.ens.algo;
    algo.sigma = mpcs.sigma > 0.0 ? mpcs.sigma : cfg.ens.signal.sigma;
    const auto model = build_model(cfg.ens.model, sc, net, algo.delta,
                                   derive_seed(cfg.ens.seed, 0, stream::model));
    MtlResult res;
    if (cfg.size_gate) {
        if (cfg.phi < 0) throw ConfigError("the peak-count gate needs a non-negative phi");
        IndependentBlocking prior;
        prior.p_los = cfg.ens.model.resolved_p_los(sc.intensity, sc.diameter);
        prior.delta = algo.delta;
        res = run_size_threshold_baseline(mpcs, net, prior, algo, cfg.phi);
    } else {
        res = run_bayesian_mtl(mpcs, net, *model, algo);
    }

    json out;
    out["estimates"] = json::array();
    for (const Matching& m : res.estimates) {
        json e;
        e["point"] = json::array({m.estimate.point.x(), m.estimate.point.y()});
        e["peaks"] = m.size();
        e["blocking_vector"] = m.khat.to_string(mpcs.num_trps);
        e["blocking_nll"] = m.blocking_nll;
        out["estimates"].push_back(e);
    }
    out["objective"] = res.objective;
    if (!scene.targets.empty()) {
        const double radius = cfg.ens.radius > 0.0 ? cfg.ens.radius : 3.0 * algo.sigma;
        const ScorePair sp = score(res.points(), scene.targets, radius);
        out["detected"] = sp.detected;
        out["false_alarms"] = sp.false_alarms;
        out["t_true"] = static_cast<int>(scene.targets.size());
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Point-target localization from bistatic ranges with a blocking-aware prior"};
    app.require_subcommand(1);

    CommonOpts sim_opts, roc_opts, stats_opts, oracle_opts, replay_opts;
    std::string save_replay, replay_in;
    bool strip_labels = false;
    int scenes = 2000;

    CLI::App* sim = app.add_subcommand(
        "simulate", "Run a seeded ensemble at one operating point and write CSV/JSON outputs");
    add_common(sim, sim_opts);
    sim->add_option("--save-replay", save_replay,
                    "also write realization 0's world and peaks to this JSON file");
    sim->add_flag("--strip-labels", strip_labels,
                  "omit truth labels (and truth geometry) from the saved replay");

    CLI::App* roc = app.add_subcommand(
        "roc", "Sweep the config's threshold grids and write one summary row per point");
    add_common(roc, roc_opts);

    CLI::App* stats = app.add_subcommand(
        "blocking-stats",
        "Sample the per-target unobstructed-channel distribution and compare it with the "
        "independent baseline");
    add_common(stats, stats_opts);
    stats->add_option("--scenes", scenes, "number of sampled scenes (default 2000)");

    CLI::App* oracle = app.add_subcommand(
        "oracle-compare",
        "Compare the staged matcher against exhaustive search on small instances");
    add_common(oracle, oracle_opts);

    CLI::App* replay = app.add_subcommand(
        "replay", "Run the matcher on a stored realization and print the estimates");
    add_common(replay, replay_opts);
    replay->add_option("--in", replay_in, "replay JSON file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (sim->parsed()) return cmd_simulate(sim_opts, save_replay, strip_labels);
        if (roc->parsed()) return cmd_roc(roc_opts);
        if (stats->parsed()) return cmd_blocking_stats(stats_opts, scenes);
        if (oracle->parsed()) return cmd_oracle_compare(oracle_opts);
        if (replay->parsed()) return cmd_replay(replay_opts, replay_in);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace blockloc::cli
