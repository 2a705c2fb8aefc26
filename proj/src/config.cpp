#include "blockloc/config.hpp"

#include <fstream>
#include <initializer_list>
#include <string>

#include "blockloc/errors.hpp"

namespace blockloc {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& key, const std::string& what) {
    throw ConfigError("config key '" + key + "': " + what);
}

std::string joined(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

void check_keys(const json& j, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool known = false;
        for (const char* a : allowed)
            if (key == a) {
                known = true;
                break;
            }
        if (!known) bad(joined(prefix, key), "unknown key");
    }
}

double get_num(const json& j, const std::string& key) {
    if (!j.is_number()) bad(key, "expected a number");
    return j.get<double>();
}

int get_int(const json& j, const std::string& key) {
    if (!j.is_number_integer()) bad(key, "expected an integer");
    return j.get<int>();
}

long get_long(const json& j, const std::string& key) {
    if (!j.is_number_integer()) bad(key, "expected an integer");
    return j.get<long>();
}

std::uint64_t get_u64(const json& j, const std::string& key) {
    if (!j.is_number_integer()) bad(key, "expected an integer");
    return j.get<std::uint64_t>();
}

bool get_bool(const json& j, const std::string& key) {
    if (!j.is_boolean()) bad(key, "expected a boolean");
    return j.get<bool>();
}

std::string get_string(const json& j, const std::string& key) {
    if (!j.is_string()) bad(key, "expected a string");
    return j.get<std::string>();
}

std::vector<Point2> get_points(const json& j, const std::string& key) {
    if (!j.is_array()) bad(key, "expected an array of [x, y] pairs");
    std::vector<Point2> out;
    for (const json& el : j) {
        if (!el.is_array() || el.size() != 2 || !el[0].is_number() || !el[1].is_number())
            bad(key, "expected [x, y] number pairs");
        out.emplace_back(el[0].get<double>(), el[1].get<double>());
    }
    return out;
}

template <typename T, typename Getter>
std::vector<T> get_list(const json& j, const std::string& key, Getter&& get) {
    if (!j.is_array()) bad(key, "expected an array");
    std::vector<T> out;
    for (const json& el : j) out.push_back(get(el, key));
    return out;
}

void parse_region(const json& j, const std::string& prefix, Region& r) {
    if (!j.is_object()) bad(prefix, "expected an object");
    check_keys(j, prefix, {"xmin", "xmax", "ymin", "ymax"});
    if (j.contains("xmin")) r.xmin = get_num(j["xmin"], joined(prefix, "xmin"));
    if (j.contains("xmax")) r.xmax = get_num(j["xmax"], joined(prefix, "xmax"));
    if (j.contains("ymin")) r.ymin = get_num(j["ymin"], joined(prefix, "ymin"));
    if (j.contains("ymax")) r.ymax = get_num(j["ymax"], joined(prefix, "ymax"));
    if (!(r.xmax > r.xmin) || !(r.ymax > r.ymin)) bad(prefix, "region must have positive extent");
}

void parse_scene(const json& j, const std::string& prefix, SceneConfig& s) {
    if (!j.is_object()) bad(prefix, "expected an object");
    check_keys(j, prefix,
               {"intensity", "diameter", "num_tx", "num_rx", "num_targets", "r_obs", "txs",
                "rxs", "targets", "placement", "p_los"});
    if (j.contains("intensity")) s.intensity = get_num(j["intensity"], joined(prefix, "intensity"));
    if (j.contains("diameter")) s.diameter = get_num(j["diameter"], joined(prefix, "diameter"));
    if (j.contains("num_tx")) s.num_tx = get_int(j["num_tx"], joined(prefix, "num_tx"));
    if (j.contains("num_rx")) s.num_rx = get_int(j["num_rx"], joined(prefix, "num_rx"));
    if (j.contains("num_targets"))
        s.num_targets = get_int(j["num_targets"], joined(prefix, "num_targets"));
    if (j.contains("r_obs")) s.r_obs = get_num(j["r_obs"], joined(prefix, "r_obs"));
    if (j.contains("txs")) {
        s.fixed_txs = get_points(j["txs"], joined(prefix, "txs"));
        s.num_tx = static_cast<int>(s.fixed_txs.size());
    }
    if (j.contains("rxs")) {
        s.fixed_rxs = get_points(j["rxs"], joined(prefix, "rxs"));
        s.num_rx = static_cast<int>(s.fixed_rxs.size());
    }
    if (j.contains("targets")) {
        s.fixed_targets = get_points(j["targets"], joined(prefix, "targets"));
        s.num_targets = static_cast<int>(s.fixed_targets.size());
    }
    if (j.contains("placement")) {
        const std::string p = get_string(j["placement"], joined(prefix, "placement"));
        if (p == "poisson" || p == "poisson_field")
            s.placement = ScatterPlacement::poisson_field;
        else if (p == "per_segment")
            s.placement = ScatterPlacement::per_segment;
        else
            bad(joined(prefix, "placement"), "expected 'poisson' or 'per_segment'");
    }
    if (j.contains("p_los")) s.p_los = get_num(j["p_los"], joined(prefix, "p_los"));
}

void parse_signal(const json& j, const std::string& prefix, SignalParams& s) {
    if (!j.is_object()) bad(prefix, "expected an object");
    check_keys(j, prefix, {"sigma", "noise_rate", "resolution"});
    if (j.contains("sigma")) s.sigma = get_num(j["sigma"], joined(prefix, "sigma"));
    if (j.contains("noise_rate"))
        s.noise_rate = get_num(j["noise_rate"], joined(prefix, "noise_rate"));
    if (j.contains("resolution"))
        s.resolution = get_num(j["resolution"], joined(prefix, "resolution"));
}

void parse_ips(const json& j, const std::string& prefix, EnsembleParams& e) {
    if (!j.is_object()) bad(prefix, "expected an object");
    check_keys(j, prefix, {"policy", "p_ip"});
    if (j.contains("policy")) {
        const std::string p = get_string(j["policy"], joined(prefix, "policy"));
        if (p == "none")
            e.ip_policy = IpPolicy::none;
        else if (p == "geometric")
            e.ip_policy = IpPolicy::geometric;
        else
            bad(joined(prefix, "policy"), "expected 'none' or 'geometric'");
    }
    if (j.contains("p_ip")) e.p_ip = get_num(j["p_ip"], joined(prefix, "p_ip"));
}

void parse_model(const json& j, const std::string& prefix, ModelParams& m) {
    if (!j.is_object()) bad(prefix, "expected an object");
    check_keys(j, prefix,
               {"kind", "cell_size", "n_samples", "n_area", "eps", "grid_resolution",
                "grid_samples", "d_avg", "p_los", "rho01", "rho10"});
    if (j.contains("kind")) {
        const std::string k = get_string(j["kind"], joined(prefix, "kind"));
        if (k == "empirical")
            m.kind = ModelKind::empirical;
        else if (k == "lower_bound")
            m.kind = ModelKind::lower_bound;
        else if (k == "independent" || k == "icb")
            m.kind = ModelKind::independent;
        else if (k == "grid")
            m.kind = ModelKind::grid;
        else
            bad(joined(prefix, "kind"),
                "expected 'empirical', 'lower_bound', 'independent', 'icb' or 'grid'");
    }
    if (j.contains("cell_size")) m.cell_size = get_num(j["cell_size"], joined(prefix, "cell_size"));
    if (j.contains("n_samples")) m.n_samples = get_long(j["n_samples"], joined(prefix, "n_samples"));
    if (j.contains("n_area")) m.n_area = get_long(j["n_area"], joined(prefix, "n_area"));
    if (j.contains("eps")) m.eps = get_num(j["eps"], joined(prefix, "eps"));
    if (j.contains("grid_resolution"))
        m.grid_resolution = get_num(j["grid_resolution"], joined(prefix, "grid_resolution"));
    if (j.contains("grid_samples"))
        m.grid_samples = get_long(j["grid_samples"], joined(prefix, "grid_samples"));
    if (j.contains("d_avg")) m.d_avg = get_num(j["d_avg"], joined(prefix, "d_avg"));
    if (j.contains("p_los")) m.p_los = get_num(j["p_los"], joined(prefix, "p_los"));
    if (j.contains("rho01")) m.rho01 = get_num(j["rho01"], joined(prefix, "rho01"));
    if (j.contains("rho10")) m.rho10 = get_num(j["rho10"], joined(prefix, "rho10"));
}

void parse_algo(const json& j, const std::string& prefix, AlgoParams& a) {
    if (!j.is_object()) bad(prefix, "expected an object");
    check_keys(j, prefix,
               {"delta", "mu", "order", "order_seed", "dedupe_radius", "intersection_tol"});
    if (j.contains("delta")) a.delta = get_num(j["delta"], joined(prefix, "delta"));
    if (j.contains("mu")) a.mu = get_num(j["mu"], joined(prefix, "mu"));
    if (j.contains("order")) {
        const std::string o = get_string(j["order"], joined(prefix, "order"));
        if (o == "identity")
            a.order = OrderStrategy::identity;
        else if (o == "most_mpcs_first")
            a.order = OrderStrategy::most_mpcs_first;
        else if (o == "fewest_mpcs_first")
            a.order = OrderStrategy::fewest_mpcs_first;
        else if (o == "shuffled")
            a.order = OrderStrategy::shuffled;
        else
            bad(joined(prefix, "order"),
                "expected 'identity', 'most_mpcs_first', 'fewest_mpcs_first' or 'shuffled'");
    }
    if (j.contains("order_seed"))
        a.order_seed = get_u64(j["order_seed"], joined(prefix, "order_seed"));
    if (j.contains("dedupe_radius"))
        a.dedupe_radius = get_num(j["dedupe_radius"], joined(prefix, "dedupe_radius"));
    if (j.contains("intersection_tol"))
        a.intersection_tol = get_num(j["intersection_tol"], joined(prefix, "intersection_tol"));
}

void parse_baseline(const json& j, const std::string& prefix, RunConfig& cfg) {
    if (!j.is_object()) bad(prefix, "expected an object");
    check_keys(j, prefix, {"size_gate", "phi"});
    if (j.contains("size_gate"))
        cfg.size_gate = get_bool(j["size_gate"], joined(prefix, "size_gate"));
    if (j.contains("phi")) cfg.phi = get_int(j["phi"], joined(prefix, "phi"));
}

void parse_sweep(const json& j, const std::string& prefix, SweepGrid& s) {
    if (!j.is_object()) bad(prefix, "expected an object");
    check_keys(j, prefix, {"delta", "mu", "phi"});
    if (j.contains("delta"))
        s.delta = get_list<double>(j["delta"], joined(prefix, "delta"), get_num);
    if (j.contains("mu")) s.mu = get_list<double>(j["mu"], joined(prefix, "mu"), get_num);
    if (j.contains("phi")) s.phi = get_list<int>(j["phi"], joined(prefix, "phi"), get_int);
}

void parse_oracle(const json& j, const std::string& prefix, OracleParams& o) {
    if (!j.is_object()) bad(prefix, "expected an object");
    check_keys(j, prefix, {"instances", "num_tx", "num_rx", "max_targets", "max_mpcs", "guard"});
    if (j.contains("instances")) o.instances = get_int(j["instances"], joined(prefix, "instances"));
    if (j.contains("num_tx")) o.num_tx = get_int(j["num_tx"], joined(prefix, "num_tx"));
    if (j.contains("num_rx")) o.num_rx = get_int(j["num_rx"], joined(prefix, "num_rx"));
    if (j.contains("max_targets"))
        o.max_targets = get_int(j["max_targets"], joined(prefix, "max_targets"));
    if (j.contains("max_mpcs")) o.max_mpcs = get_int(j["max_mpcs"], joined(prefix, "max_mpcs"));
    if (j.contains("guard")) o.guard = get_long(j["guard"], joined(prefix, "guard"));
}

json points_to_json(const std::vector<Point2>& pts) {
    json arr = json::array();
    for (const Point2& p : pts) arr.push_back(json::array({p.x(), p.y()}));
    return arr;
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

void apply_config_json(RunConfig& cfg, const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    check_keys(j, "",
               {"seed", "realizations", "threads", "output", "genie", "radius", "region",
                "scene", "signal", "ips", "model", "algo", "baseline", "sweep", "oracle"});
    for (const char* required : {"seed", "realizations"})
        if (!j.contains(required))
            throw ConfigError(std::string("missing required config key '") + required + "'");

    cfg.ens.seed = get_u64(j["seed"], "seed");
    cfg.ens.n_realizations = get_int(j["realizations"], "realizations");
    if (cfg.ens.n_realizations <= 0) bad("realizations", "must be positive");
    if (j.contains("threads")) {
        cfg.ens.threads = get_int(j["threads"], "threads");
        if (cfg.ens.threads <= 0) bad("threads", "must be positive");
    }
    if (j.contains("output")) cfg.output_dir = get_string(j["output"], "output");
    if (j.contains("genie")) cfg.ens.with_genie = get_bool(j["genie"], "genie");
    if (j.contains("radius")) cfg.ens.radius = get_num(j["radius"], "radius");
    if (j.contains("region")) parse_region(j["region"], "region", cfg.ens.scene.region);
    if (j.contains("scene")) parse_scene(j["scene"], "scene", cfg.ens.scene);
    if (j.contains("signal")) parse_signal(j["signal"], "signal", cfg.ens.signal);
    if (j.contains("ips")) parse_ips(j["ips"], "ips", cfg.ens);
    if (j.contains("model")) parse_model(j["model"], "model", cfg.ens.model);
    if (j.contains("algo")) parse_algo(j["algo"], "algo", cfg.ens.algo);
    if (j.contains("baseline")) parse_baseline(j["baseline"], "baseline", cfg);
    if (j.contains("sweep")) parse_sweep(j["sweep"], "sweep", cfg.sweep);
    if (j.contains("oracle")) parse_oracle(j["oracle"], "oracle", cfg.oracle);
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    RunConfig cfg = default_config();
    apply_config_json(cfg, j);
    return cfg;
}

json config_to_json(const RunConfig& cfg) {
    const EnsembleParams& e = cfg.ens;
    json j;
    j["seed"] = e.seed;
    j["realizations"] = e.n_realizations;
    j["threads"] = e.threads;
    j["output"] = cfg.output_dir;
    j["genie"] = e.with_genie;
    j["radius"] = e.radius;
    j["region"] = {{"xmin", e.scene.region.xmin},
                   {"xmax", e.scene.region.xmax},
                   {"ymin", e.scene.region.ymin},
                   {"ymax", e.scene.region.ymax}};
    json scene;
    scene["intensity"] = e.scene.intensity;
    scene["diameter"] = e.scene.diameter;
    scene["num_tx"] = e.scene.num_tx;
    scene["num_rx"] = e.scene.num_rx;
    scene["num_targets"] = e.scene.num_targets;
    scene["r_obs"] = e.scene.r_obs;
    if (!e.scene.fixed_txs.empty()) scene["txs"] = points_to_json(e.scene.fixed_txs);
    if (!e.scene.fixed_rxs.empty()) scene["rxs"] = points_to_json(e.scene.fixed_rxs);
    if (!e.scene.fixed_targets.empty()) scene["targets"] = points_to_json(e.scene.fixed_targets);
    scene["placement"] =
        e.scene.placement == ScatterPlacement::poisson_field ? "poisson" : "per_segment";
    scene["p_los"] = e.scene.p_los;
    j["scene"] = scene;
    j["signal"] = {{"sigma", e.signal.sigma},
                   {"noise_rate", e.signal.noise_rate},
                   {"resolution", e.signal.resolution}};
    j["ips"] = {{"policy", e.ip_policy == IpPolicy::none ? "none" : "geometric"},
                {"p_ip", e.p_ip}};
    const char* kind = "empirical";
    switch (e.model.kind) {
        case ModelKind::empirical: kind = "empirical"; break;
        case ModelKind::lower_bound: kind = "lower_bound"; break;
        case ModelKind::independent: kind = "independent"; break;
        case ModelKind::grid: kind = "grid"; break;
    }
    j["model"] = {{"kind", kind},
                  {"cell_size", e.model.cell_size},
                  {"n_samples", e.model.n_samples},
                  {"n_area", e.model.n_area},
                  {"eps", e.model.eps},
                  {"grid_resolution", e.model.grid_resolution},
                  {"grid_samples", e.model.grid_samples},
                  {"d_avg", e.model.d_avg},
                  {"p_los", e.model.p_los},
                  {"rho01", e.model.rho01},
                  {"rho10", e.model.rho10}};
    const char* order = "most_mpcs_first";
    switch (e.algo.order) {
        case OrderStrategy::identity: order = "identity"; break;
        case OrderStrategy::most_mpcs_first: order = "most_mpcs_first"; break;
        case OrderStrategy::fewest_mpcs_first: order = "fewest_mpcs_first"; break;
        case OrderStrategy::shuffled: order = "shuffled"; break;
    }
    j["algo"] = {{"delta", e.algo.delta},
                 {"mu", e.algo.mu},
                 {"order", order},
                 {"order_seed", e.algo.order_seed},
                 {"dedupe_radius", e.algo.dedupe_radius},
                 {"intersection_tol", e.algo.intersection_tol}};
    j["baseline"] = {{"size_gate", cfg.size_gate}, {"phi", cfg.phi}};
    json sweep;
    sweep["delta"] = cfg.sweep.delta;
    sweep["mu"] = cfg.sweep.mu;
    sweep["phi"] = cfg.sweep.phi;
    j["sweep"] = sweep;
    j["oracle"] = {{"instances", cfg.oracle.instances}, {"num_tx", cfg.oracle.num_tx},
                   {"num_rx", cfg.oracle.num_rx},       {"max_targets", cfg.oracle.max_targets},
                   {"max_mpcs", cfg.oracle.max_mpcs},   {"guard", cfg.oracle.guard}};
    return j;
}

}  // namespace blockloc
