#pragma once

// Annotations, transcript exports, per-run reports and aggregate statistics.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagehand/session.hpp"

namespace stagehand {

inline constexpr std::string_view kExportFormat = "stagehand-transcript/1";

struct Annotation {
    enum class Kind { TriggerAccuracy, DialogueQuality };

    std::string session_id;
    Kind kind = Kind::TriggerAccuracy;
    // TriggerAccuracy targets an index into Session::firings,
    // DialogueQuality an index into Session::lines (a Dialogue line).
    std::size_t target = 0;
    bool value = false;  // correct / good
    std::string note;
    std::string author;

    bool operator==(const Annotation&) const = default;
};

std::string_view to_string(Annotation::Kind kind);
nlohmann::json annotation_to_json(const Annotation& a);
Annotation annotation_from_json(const nlohmann::json& j);

// Throws std::invalid_argument when the target does not exist in the session,
// std::logic_error when the author already judged that firing.
void check_annotation(const Session& session, const std::vector<Annotation>& existing, const Annotation& candidate);

bool annotation_target_exists(const Session& session, const Annotation& a);

struct RunReport {
    int simulation_length = 0;  // dialogue lines
    int dialogue_count = 0;
    int action_count = 0;            // stage actions injected by triggers
    int generated_action_count = 0;  // stage actions written by the model
    std::map<std::string, int> firings_per_trigger;
    std::string ended_by;  // ending trigger id | "cap" | "exhaustion" | "awaiting-player"

    bool operator==(const RunReport&) const = default;
};

RunReport run_report(const Session& session);
nlohmann::json report_to_json(const RunReport& r);
RunReport report_from_json(const nlohmann::json& j);

// Recounts a report from an export's structured line list and firing log.
RunReport recount_report(const nlohmann::json& export_doc);

nlohmann::json build_export(const Session& session, const std::vector<Annotation>& annotations = {});
std::string export_text(const Session& session);  // rendered script plus a final newline

// ---------------------------------------------------------------------------
// Aggregate statistics

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // population
    std::size_t count = 0;
};

// Requires at least one value (std::invalid_argument otherwise).
MeanStd mean_std(const std::vector<double>& values);
std::string format_mean_std(const MeanStd& m);  // "28.33 ± 13.14"

struct AggregateStats {
    // Ordered rows: Characters, Triggers, Actions per trigger, Simulation length, Dialogues, Actions.
    std::vector<std::pair<std::string, MeanStd>> rows;
    std::size_t files = 0;
};

// One observation per export document.
AggregateStats aggregate_exports(const std::vector<nlohmann::json>& exports);
std::string format_stats_table(const AggregateStats& stats);

}  // namespace stagehand
