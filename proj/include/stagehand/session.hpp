#pragma once

// Playthrough state shared by the drama manager, the engine and persistence.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagehand/story.hpp"

namespace stagehand {

struct TriggerRuntime {
    std::string trigger_id;
    int next_action_index = 0;
    bool active = true;
    int fire_count = 0;
    std::optional<int> last_fired_turn;

    bool operator==(const TriggerRuntime&) const = default;
};

struct FiringEvent {
    int turn = 0;
    std::string trigger_id;
    int action_index = 0;
    StageAction injected;
    bool ended_session = false;
    std::size_t line_index = 0;  // position of the injected line in Session::lines

    bool operator==(const FiringEvent&) const = default;
};

// Dialogue lines since the most recent firing of any trigger.
struct FallbackClock {
    int lines_since_last_fire = 0;

    bool operator==(const FallbackClock&) const = default;
};

enum class SessionState { Running, AwaitingPlayer, Ended, Errored };
enum class Mode { Interactive, Autonomous };

std::string_view to_string(SessionState state);
std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view s);  // throws std::invalid_argument

struct EngineEvent {
    enum class Kind { Firing, ParseError, BackendError, AmbiguousAnswer, Intercepted, PlayerLine, LengthCap, Errored, Reset };

    Kind kind = Kind::Firing;
    int turn = 0;
    std::string message;
    std::string trigger_id;

    bool operator==(const EngineEvent&) const = default;
};

std::string_view to_string(EngineEvent::Kind kind);

struct Session {
    std::string id;
    StoryDefinition definition;  // immutable snapshot taken at creation
    Mode mode = Mode::Autonomous;
    std::uint64_t seed = 0;

    std::vector<ScriptLine> lines;
    std::vector<TriggerRuntime> runtimes;  // parallel to definition.triggers
    FallbackClock clock;
    int turn = 0;  // dialogue lines appended so far
    SessionState state = SessionState::Running;
    std::string error_reason;
    std::vector<FiringEvent> firings;
    std::vector<EngineEvent> events;

    static Session create(std::string id, StoryDefinition definition, Mode mode, std::uint64_t seed = 0);

    TriggerRuntime& runtime_for(std::string_view trigger_id);
    const TriggerRuntime& runtime_for(std::string_view trigger_id) const;

    std::string rendered_script() const { return render_script(definition.world_setting, lines); }

    void log(EngineEvent::Kind kind, std::string message, std::string trigger_id = {});
};

// Deep copy of everything a step can change.
struct Snapshot {
    std::string session_id;
    std::size_t line_count = 0;

    std::vector<ScriptLine> lines;
    std::vector<TriggerRuntime> runtimes;
    FallbackClock clock;
    int turn = 0;
    SessionState state = SessionState::Running;
    std::string error_reason;
    std::vector<FiringEvent> firings;
    std::vector<EngineEvent> events;
};

nlohmann::json session_to_json(const Session& s);
Session session_from_json(const nlohmann::json& j);
nlohmann::json snapshot_to_json(const Snapshot& s);
Snapshot snapshot_from_json(const nlohmann::json& j);
nlohmann::json firing_to_json(const FiringEvent& f);
nlohmann::json event_to_json(const EngineEvent& e);

}  // namespace stagehand
