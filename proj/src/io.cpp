#include "blockloc/io.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "blockloc/errors.hpp"

namespace blockloc {

namespace {

using nlohmann::json;

/// Shortest round-trip decimal form (what the JSON serializer emits), so
/// CSV output is byte-stable across runs and platforms with the same build.
std::string fmt(double x) { return json(x).dump(); }

json point_to_json(const Point2& p) { return json::array({p.x(), p.y()}); }

Point2 point_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ConfigError("expected an [x, y] pair");
    return {j[0].get<double>(), j[1].get<double>()};
}

json points_to_json(const std::vector<Point2>& pts) {
    json arr = json::array();
    for (const Point2& p : pts) arr.push_back(point_to_json(p));
    return arr;
}

std::vector<Point2> points_from_json(const json& j) {
    if (!j.is_array()) throw ConfigError("expected an array of points");
    std::vector<Point2> out;
    for (const json& el : j) out.push_back(point_from_json(el));
    return out;
}

const char* kind_name(MpcKind k) {
    switch (k) {
        case MpcKind::direct: return "direct";
        case MpcKind::indirect_target_first: return "indirect_target_first";
        case MpcKind::indirect_scatterer_first: return "indirect_scatterer_first";
        case MpcKind::noise: return "noise";
        case MpcKind::merged: return "merged";
    }
    return "noise";
}

MpcKind kind_from_name(const std::string& s) {
    if (s == "direct") return MpcKind::direct;
    if (s == "indirect_target_first") return MpcKind::indirect_target_first;
    if (s == "indirect_scatterer_first") return MpcKind::indirect_scatterer_first;
    if (s == "noise") return MpcKind::noise;
    if (s == "merged") return MpcKind::merged;
    throw ConfigError("unknown peak label kind: " + s);
}

json label_to_json(const MpcLabel& label) {
    json j;
    j["kind"] = kind_name(label.kind);
    if (label.target >= 0) j["target"] = label.target;
    if (label.scatterer >= 0) j["scatterer"] = label.scatterer;
    if (!label.parts.empty()) {
        json parts = json::array();
        for (const MpcLabel& p : label.parts) parts.push_back(label_to_json(p));
        j["parts"] = parts;
    }
    return j;
}

MpcLabel label_from_json(const json& j) {
    MpcLabel label;
    if (j.contains("kind")) label.kind = kind_from_name(j["kind"].get<std::string>());
    if (j.contains("target")) label.target = j["target"].get<int>();
    if (j.contains("scatterer")) label.scatterer = j["scatterer"].get<int>();
    if (j.contains("parts"))
        for (const json& p : j["parts"]) label.parts.push_back(label_from_json(p));
    return label;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path);
    return out;
}

}  // namespace

json scene_to_json(const Scene& scene) {
    json j;
    j["region"] = {{"xmin", scene.region.xmin},
                   {"xmax", scene.region.xmax},
                   {"ymin", scene.region.ymin},
                   {"ymax", scene.region.ymax}};
    j["txs"] = points_to_json(scene.txs);
    j["rxs"] = points_to_json(scene.rxs);
    j["targets"] = points_to_json(scene.targets);
    json sc = json::array();
    for (const Scatterer& s : scene.scatterers)
        sc.push_back(json::array({s.center.x(), s.center.y(), s.diameter}));
    j["scatterers"] = sc;
    j["r_obs"] = scene.r_obs;
    return j;
}

Scene scene_from_json(const json& j) {
    Scene scene;
    if (j.contains("region")) {
        const json& r = j["region"];
        scene.region.xmin = r.at("xmin").get<double>();
        scene.region.xmax = r.at("xmax").get<double>();
        scene.region.ymin = r.at("ymin").get<double>();
        scene.region.ymax = r.at("ymax").get<double>();
    }
    scene.txs = points_from_json(j.at("txs"));
    scene.rxs = points_from_json(j.at("rxs"));
    if (j.contains("targets")) scene.targets = points_from_json(j["targets"]);
    if (j.contains("scatterers"))
        for (const json& el : j["scatterers"]) {
            if (!el.is_array() || el.size() != 3)
                throw ConfigError("expected [x, y, diameter] scatterer triples");
            scene.scatterers.push_back(
                Scatterer{{el[0].get<double>(), el[1].get<double>()}, el[2].get<double>()});
        }
    if (j.contains("r_obs")) scene.r_obs = j["r_obs"].get<double>();
    return scene;
}

json mpcs_to_json(const MpcSet& mpcs, bool strip_labels) {
    json j;
    j["num_trps"] = mpcs.num_trps;
    j["r_obs"] = mpcs.r_obs;
    j["sigma"] = mpcs.sigma;
    j["resolution"] = mpcs.resolution;
    json channels = json::array();
    for (const auto& peaks : mpcs.per_trp) {
        json ch = json::array();
        for (const Mpc& m : peaks) {
            json p;
            p["range"] = m.range;
            if (!strip_labels) p["label"] = label_to_json(m.label);
            ch.push_back(p);
        }
        channels.push_back(ch);
    }
    j["channels"] = channels;
    return j;
}

MpcSet mpcs_from_json(const json& j) {
    MpcSet mpcs;
    mpcs.num_trps = j.at("num_trps").get<int>();
    if (j.contains("r_obs")) mpcs.r_obs = j["r_obs"].get<double>();
    if (j.contains("sigma")) mpcs.sigma = j["sigma"].get<double>();
    if (j.contains("resolution")) mpcs.resolution = j["resolution"].get<double>();
    const json& channels = j.at("channels");
    if (!channels.is_array() || static_cast<int>(channels.size()) != mpcs.num_trps)
        throw ConfigError("channels array must have num_trps entries");
    for (const json& ch : channels) {
        std::vector<Mpc> peaks;
        for (const json& p : ch) {
            Mpc m;
            m.range = p.at("range").get<double>();
            if (p.contains("label")) m.label = label_from_json(p["label"]);
            peaks.push_back(std::move(m));
        }
        mpcs.per_trp.push_back(std::move(peaks));
    }
    return mpcs;
}

json gridstats_to_json(const GridStats& stats) {
    json j;
    j["region"] = {{"xmin", stats.region.xmin},
                   {"xmax", stats.region.xmax},
                   {"ymin", stats.region.ymin},
                   {"ymax", stats.region.ymax}};
    j["resolution"] = stats.resolution;
    j["m_tx"] = stats.m_tx;
    j["m_rx"] = stats.m_rx;
    j["nx"] = stats.nx;
    j["ny"] = stats.ny;
    json mean = json::array();
    for (const VecX& m : stats.mean) mean.push_back(std::vector<double>(m.begin(), m.end()));
    j["mean"] = mean;
    json cov = json::array();
    for (const MatX& c : stats.cov) {
        std::vector<double> flat;
        flat.reserve(static_cast<std::size_t>(c.rows()) * c.cols());
        for (int r = 0; r < c.rows(); ++r)
            for (int col = 0; col < c.cols(); ++col) flat.push_back(c(r, col));
        cov.push_back(flat);
    }
    j["cov"] = cov;
    return j;
}

GridStats gridstats_from_json(const json& j) {
    GridStats stats;
    const json& r = j.at("region");
    stats.region.xmin = r.at("xmin").get<double>();
    stats.region.xmax = r.at("xmax").get<double>();
    stats.region.ymin = r.at("ymin").get<double>();
    stats.region.ymax = r.at("ymax").get<double>();
    stats.resolution = j.at("resolution").get<double>();
    stats.m_tx = j.at("m_tx").get<int>();
    stats.m_rx = j.at("m_rx").get<int>();
    stats.nx = j.at("nx").get<int>();
    stats.ny = j.at("ny").get<int>();
    const int dim = stats.m_tx * stats.m_rx;
    for (const json& m : j.at("mean")) {
        VecX v(dim);
        for (int i = 0; i < dim; ++i) v[i] = m.at(i).get<double>();
        stats.mean.push_back(std::move(v));
    }
    for (const json& c : j.at("cov")) {
        MatX mat(dim, dim);
        for (int row = 0; row < dim; ++row)
            for (int col = 0; col < dim; ++col)
                mat(row, col) = c.at(row * dim + col).get<double>();
        stats.cov.push_back(std::move(mat));
    }
    return stats;
}

json replay_to_json(const Scene& scene, const MpcSet& mpcs, bool strip_labels) {
    json j;
    j["scene"] = scene_to_json(scene);
    if (strip_labels) {
        j["scene"].erase("scatterers");
        j["scene"].erase("targets");
    }
    j["mpcs"] = mpcs_to_json(mpcs, strip_labels);
    return j;
}

std::string csv_header(const RunConfig& cfg) {
    std::ostringstream out;
    out << "# blockloc output\n";
    out << "# config: " << config_to_json(cfg).dump() << "\n";
    return out.str();
}

void write_runs_csv(const std::string& path, const EnsembleReport& report, const RunConfig& cfg) {
    std::ofstream out = open_out(path);
    out << csv_header(cfg);
    out << "realization,delta,mu,phi,t_true,t_hat,detected,false_alarms,genie_detected,"
           "placement_failed\n";
    for (const RealizationRecord& r : report.rows)
        out << r.realization << ',' << fmt(r.delta) << ',' << fmt(r.mu) << ',' << r.phi << ','
            << r.t_true << ',' << r.t_hat << ',' << r.detected << ',' << r.false_alarms << ','
            << r.genie_detected << ',' << (r.placement_failed ? 1 : 0) << '\n';
    if (!out) throw Error("short write: " + path);
}

void write_roc_csv(const std::string& path, const EnsembleReport& report, const RunConfig& cfg) {
    std::vector<std::size_t> order(report.summaries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const SweepPoint& pa = report.summaries[a].point;
        const SweepPoint& pb = report.summaries[b].point;
        if (pa.delta != pb.delta) return pa.delta < pb.delta;
        if (pa.size_gate != pb.size_gate) return !pa.size_gate;
        if (pa.size_gate) return pa.phi < pb.phi;
        return pa.mu < pb.mu;
    });
    std::ofstream out = open_out(path);
    out << csv_header(cfg);
    out << "delta,mu,phi,size_gate,p_d,p_f,p_d_se,p_f_se,genie_p_d,zero_denominator,failures\n";
    for (std::size_t i : order) {
        const SweepSummary& s = report.summaries[i];
        out << fmt(s.point.delta) << ',' << fmt(s.point.mu) << ',' << s.point.phi << ','
            << (s.point.size_gate ? 1 : 0) << ',' << fmt(s.p_d) << ',' << fmt(s.p_f) << ','
            << fmt(s.p_d_se) << ',' << fmt(s.p_f_se) << ',' << fmt(s.genie_p_d) << ','
            << s.zero_denominator_count << ',' << s.failures << '\n';
    }
    if (!out) throw Error("short write: " + path);
}

void write_summary_json(const std::string& path, const EnsembleReport& report,
                        const RunConfig& cfg) {
    json j;
    j["config"] = config_to_json(cfg);
    j["wall_seconds"] = report.wall_seconds;
    json points = json::array();
    for (const SweepSummary& s : report.summaries) {
        json p;
        p["delta"] = s.point.delta;
        p["mu"] = s.point.mu;
        p["phi"] = s.point.phi;
        p["size_gate"] = s.point.size_gate;
        p["p_d"] = s.p_d;
        p["p_f"] = s.p_f;
        p["p_d_se"] = s.p_d_se;
        p["p_f_se"] = s.p_f_se;
        p["genie_p_d"] = s.genie_p_d;
        p["zero_denominator"] = s.zero_denominator_count;
        p["failures"] = s.failures;
        points.push_back(p);
    }
    j["points"] = points;
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
    if (!out) throw Error("short write: " + path);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out = open_out(path);
    out << content;
    if (!out) throw Error("short write: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open for reading: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace blockloc
