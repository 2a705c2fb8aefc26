#pragma once

#include <string>

#include <json.hpp>

#include "blockloc/blocking.hpp"
#include "blockloc/config.hpp"
#include "blockloc/eval.hpp"
#include "blockloc/scene.hpp"
#include "blockloc/signal.hpp"

namespace blockloc {

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

/// Peak sets round-trip through JSON; truth labels can be stripped so a
/// stored measurement file carries no simulation-side information.
nlohmann::json mpcs_to_json(const MpcSet& mpcs, bool strip_labels = false);
MpcSet mpcs_from_json(const nlohmann::json& j);

nlohmann::json gridstats_to_json(const GridStats& stats);
GridStats gridstats_from_json(const nlohmann::json& j);

/// A replay file bundles the node geometry and the peaks of one realization.
nlohmann::json replay_to_json(const Scene& scene, const MpcSet& mpcs, bool strip_labels);

/// All output files begin with '#'-prefixed header lines embedding the
/// resolved configuration and seed.
std::string csv_header(const RunConfig& cfg);

/// Per-(realization, sweep point) rows.  Wall-clock timings are deliberately
/// kept out of this file so that identical seeds produce identical bytes;
/// they are reported in the summary JSON instead.
void write_runs_csv(const std::string& path, const EnsembleReport& report, const RunConfig& cfg);

/// One row per sweep point, sorted by (delta, mu/phi).
void write_roc_csv(const std::string& path, const EnsembleReport& report, const RunConfig& cfg);

/// Aggregate summary (includes wall-clock time, which varies run to run).
void write_summary_json(const std::string& path, const EnsembleReport& report,
                        const RunConfig& cfg);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace blockloc
