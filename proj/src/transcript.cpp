#include "stagehand/transcript.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace stagehand {

using nlohmann::json;

std::string_view to_string(Annotation::Kind kind)
{
    return kind == Annotation::Kind::TriggerAccuracy ? "trigger_accuracy" : "dialogue_quality";
}

json annotation_to_json(const Annotation& a)
{
    return {{"session_id", a.session_id},
            {"kind", std::string(to_string(a.kind))},
            {"target", a.target},
            {"value", a.value},
            {"note", a.note},
            {"author", a.author}};
}

Annotation annotation_from_json(const json& j)
{
    Annotation a;
    a.session_id = j.value("session_id", std::string());
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "trigger_accuracy")
        a.kind = Annotation::Kind::TriggerAccuracy;
    else if (kind == "dialogue_quality")
        a.kind = Annotation::Kind::DialogueQuality;
    else
        throw std::invalid_argument("kind must be \"trigger_accuracy\" or \"dialogue_quality\"");
    if (!j.at("target").is_number_unsigned())
        throw std::invalid_argument("target must be a non-negative index");
    a.target = j.at("target").get<std::size_t>();
    if (!j.at("value").is_boolean())
        throw std::invalid_argument("value must be a boolean");
    a.value = j.at("value").get<bool>();
    a.note = j.value("note", std::string());
    a.author = j.value("author", std::string());
    return a;
}

bool annotation_target_exists(const Session& session, const Annotation& a)
{
    if (a.kind == Annotation::Kind::TriggerAccuracy)
        return a.target < session.firings.size();
    return a.target < session.lines.size() && is_dialogue(session.lines[a.target]);
}

void check_annotation(const Session& session, const std::vector<Annotation>& existing, const Annotation& candidate)
{
    if (!annotation_target_exists(session, candidate))
        throw std::invalid_argument(candidate.kind == Annotation::Kind::TriggerAccuracy
                                        ? "no firing event at index " + std::to_string(candidate.target)
                                        : "no dialogue line at index " + std::to_string(candidate.target));
    if (candidate.kind != Annotation::Kind::TriggerAccuracy)
        return;
    for (const auto& a : existing) {
        if (a.kind == Annotation::Kind::TriggerAccuracy && a.target == candidate.target &&
            a.author == candidate.author)
            throw std::logic_error("firing " + std::to_string(candidate.target) + " already has a trigger accuracy "
                                   "annotation by \"" + candidate.author + "\"");
    }
}

// ---------------------------------------------------------------------------

namespace {

std::string ended_by(const Session& s)
{
    switch (s.state) {
    case SessionState::Ended:
        for (auto it = s.firings.rbegin(); it != s.firings.rend(); ++it)
            if (it->ended_session)
                return it->trigger_id;
        return "exhaustion";
    case SessionState::Errored:
        return s.error_reason == "length cap" ? "cap" : "exhaustion";
    case SessionState::AwaitingPlayer:
        return "awaiting-player";
    case SessionState::Running:
        break;
    }
    return "cap";
}

}  // namespace

RunReport run_report(const Session& session)
{
    RunReport r;
    for (const auto& line : session.lines) {
        if (is_dialogue(line))
            ++r.dialogue_count;
        else if (std::get<StageAction>(line).is_injected())
            ++r.action_count;
        else
            ++r.generated_action_count;
    }
    r.simulation_length = r.dialogue_count;
    for (const auto& t : session.definition.triggers)
        r.firings_per_trigger[t.id] = 0;
    for (const auto& f : session.firings)
        ++r.firings_per_trigger[f.trigger_id];
    r.ended_by = ended_by(session);
    return r;
}

json report_to_json(const RunReport& r)
{
    return {{"simulation_length", r.simulation_length},
            {"dialogue_count", r.dialogue_count},
            {"action_count", r.action_count},
            {"generated_action_count", r.generated_action_count},
            {"firings_per_trigger", r.firings_per_trigger},
            {"ended_by", r.ended_by}};
}

RunReport report_from_json(const json& j)
{
    RunReport r;
    r.simulation_length = j.at("simulation_length").get<int>();
    r.dialogue_count = j.at("dialogue_count").get<int>();
    r.action_count = j.at("action_count").get<int>();
    r.generated_action_count = j.value("generated_action_count", 0);
    r.firings_per_trigger = j.at("firings_per_trigger").get<std::map<std::string, int>>();
    r.ended_by = j.at("ended_by").get<std::string>();
    return r;
}

RunReport recount_report(const json& doc)
{
    RunReport r;
    for (const auto& line : doc.at("lines")) {
        if (line.at("kind") == "dialogue")
            ++r.dialogue_count;
        else if (line.at("source").at("kind") == "trigger")
            ++r.action_count;
        else
            ++r.generated_action_count;
    }
    r.simulation_length = r.dialogue_count;
    for (const auto& t : doc.at("story").at("triggers"))
        r.firings_per_trigger[t.at("id").get<std::string>()] = 0;
    for (const auto& f : doc.at("firings"))
        ++r.firings_per_trigger[f.at("trigger_id").get<std::string>()];
    r.ended_by = doc.at("report").at("ended_by").get<std::string>();
    return r;
}

json build_export(const Session& session, const std::vector<Annotation>& annotations)
{
    json lines = json::array();
    for (std::size_t i = 0; i < session.lines.size(); ++i) {
        json l = line_to_json(session.lines[i]);
        l["index"] = i;
        lines.push_back(std::move(l));
    }
    json firings = json::array();
    for (const auto& f : session.firings)
        firings.push_back(firing_to_json(f));
    json notes = json::array();
    for (const auto& a : annotations)
        notes.push_back(annotation_to_json(a));
    json events = json::array();
    for (const auto& e : session.events)
        events.push_back(event_to_json(e));

    return {{"format", std::string(kExportFormat)},
            {"session_id", session.id},
            {"mode", std::string(to_string(session.mode))},
            {"seed", session.seed},
            {"state", std::string(to_string(session.state))},
            {"error_reason", session.error_reason},
            {"story", story_to_json(session.definition)},
            {"script", session.rendered_script()},
            {"lines", std::move(lines)},
            {"firings", std::move(firings)},
            {"annotations", std::move(notes)},
            {"events", std::move(events)},
            {"report", report_to_json(run_report(session))}};
}

std::string export_text(const Session& session)
{
    return session.rendered_script() + "\n";
}

// ---------------------------------------------------------------------------

MeanStd mean_std(const std::vector<double>& values)
{
    if (values.empty())
        throw std::invalid_argument("mean_std needs at least one value");
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values)
        ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / n), values.size()};
}

std::string format_mean_std(const MeanStd& m)
{
    char buf[96];
    // Avoid printing "-0.00".
    const double mean = std::abs(m.mean) < 0.005 ? 0.0 : m.mean;
    std::snprintf(buf, sizeof buf, "%.2f ± %.2f", mean, m.stddev);
    return buf;
}

AggregateStats aggregate_exports(const std::vector<json>& exports)
{
    std::vector<double> characters, triggers, per_trigger, length, dialogues, actions;
    for (const auto& doc : exports) {
        const auto& story = doc.at("story");
        const auto& trig = story.at("triggers");
        characters.push_back(static_cast<double>(story.at("characters").size()));
        triggers.push_back(static_cast<double>(trig.size()));
        if (!trig.empty()) {
            double total = 0;
            for (const auto& t : trig)
                total += static_cast<double>(t.at("actions").size());
            per_trigger.push_back(total / static_cast<double>(trig.size()));
        }
        const RunReport r = recount_report(doc);
        length.push_back(r.simulation_length);
        dialogues.push_back(r.dialogue_count);
        actions.push_back(r.action_count);
    }

    AggregateStats stats;
    stats.files = exports.size();
    auto add = [&](const char* name, const std::vector<double>& v) {
        stats.rows.emplace_back(name, v.empty() ? MeanStd{} : mean_std(v));
    };
    add("Characters", characters);
    add("Triggers", triggers);
    add("Actions per trigger", per_trigger);
    add("Simulation length", length);
    add("Dialogues", dialogues);
    add("Actions", actions);
    return stats;
}

std::string format_stats_table(const AggregateStats& stats)
{
    std::ostringstream out;
    out << "transcripts: " << stats.files << "\n";
    for (const auto& [name, m] : stats.rows) {
        std::string label = name;
        label.resize(22, ' ');
        out << label << (m.count == 0 ? std::string("n/a") : format_mean_std(m)) << "\n";
    }
    return out.str();
}

}  // namespace stagehand
