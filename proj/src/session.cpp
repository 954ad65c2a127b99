#include "stagehand/session.hpp"

#include <stdexcept>

namespace stagehand {

using nlohmann::json;

std::string_view to_string(SessionState state)
{
    switch (state) {
    case SessionState::Running:
        return "running";
    case SessionState::AwaitingPlayer:
        return "awaiting_player";
    case SessionState::Ended:
        return "ended";
    case SessionState::Errored:
        return "errored";
    }
    return "?";
}

static SessionState state_from_string(std::string_view s)
{
    for (auto st : {SessionState::Running, SessionState::AwaitingPlayer, SessionState::Ended, SessionState::Errored})
        if (to_string(st) == s)
            return st;
    throw std::invalid_argument("unknown session state \"" + std::string(s) + "\"");
}

std::string_view to_string(Mode mode)
{
    return mode == Mode::Interactive ? "interactive" : "autonomous";
}

Mode mode_from_string(std::string_view s)
{
    if (s == "interactive")
        return Mode::Interactive;
    if (s == "autonomous")
        return Mode::Autonomous;
    throw std::invalid_argument("mode must be \"interactive\" or \"autonomous\"");
}

std::string_view to_string(EngineEvent::Kind kind)
{
    using K = EngineEvent::Kind;
    switch (kind) {
    case K::Firing:
        return "firing";
    case K::ParseError:
        return "parse_error";
    case K::BackendError:
        return "backend_error";
    case K::AmbiguousAnswer:
        return "ambiguous_answer";
    case K::Intercepted:
        return "intercepted";
    case K::PlayerLine:
        return "player_line";
    case K::LengthCap:
        return "length_cap";
    case K::Errored:
        return "errored";
    case K::Reset:
        return "reset";
    }
    return "?";
}

static EngineEvent::Kind event_kind_from_string(std::string_view s)
{
    using K = EngineEvent::Kind;
    for (auto k : {K::Firing, K::ParseError, K::BackendError, K::AmbiguousAnswer, K::Intercepted, K::PlayerLine,
                   K::LengthCap, K::Errored, K::Reset})
        if (to_string(k) == s)
            return k;
    throw std::invalid_argument("unknown event kind \"" + std::string(s) + "\"");
}

Session Session::create(std::string id, StoryDefinition definition, Mode mode, std::uint64_t seed)
{
    Session s;
    s.id = std::move(id);
    s.mode = mode;
    s.seed = seed;
    for (const auto& t : definition.triggers)
        s.runtimes.push_back(TriggerRuntime{t.id});
    s.definition = std::move(definition);
    return s;
}

TriggerRuntime& Session::runtime_for(std::string_view trigger_id)
{
    for (auto& r : runtimes)
        if (r.trigger_id == trigger_id)
            return r;
    throw std::out_of_range("no runtime for trigger \"" + std::string(trigger_id) + "\"");
}

const TriggerRuntime& Session::runtime_for(std::string_view trigger_id) const
{
    return const_cast<Session*>(this)->runtime_for(trigger_id);
}

void Session::log(EngineEvent::Kind kind, std::string message, std::string trigger_id)
{
    events.push_back({kind, turn, std::move(message), std::move(trigger_id)});
}

// ---------------------------------------------------------------------------

namespace {

json runtime_to_json(const TriggerRuntime& r)
{
    json j = {{"trigger_id", r.trigger_id},
              {"next_action_index", r.next_action_index},
              {"active", r.active},
              {"fire_count", r.fire_count}};
    j["last_fired_turn"] = r.last_fired_turn ? json(*r.last_fired_turn) : json(nullptr);
    return j;
}

TriggerRuntime runtime_from_json(const json& j)
{
    TriggerRuntime r;
    r.trigger_id = j.at("trigger_id").get<std::string>();
    r.next_action_index = j.at("next_action_index").get<int>();
    r.active = j.at("active").get<bool>();
    r.fire_count = j.at("fire_count").get<int>();
    if (!j.at("last_fired_turn").is_null())
        r.last_fired_turn = j.at("last_fired_turn").get<int>();
    return r;
}

FiringEvent firing_from_json(const json& j)
{
    FiringEvent f;
    f.turn = j.at("turn").get<int>();
    f.trigger_id = j.at("trigger_id").get<std::string>();
    f.action_index = j.at("action_index").get<int>();
    f.injected = std::get<StageAction>(line_from_json(j.at("injected")));
    f.ended_session = j.at("ended_session").get<bool>();
    f.line_index = j.at("line_index").get<std::size_t>();
    return f;
}

EngineEvent event_from_json(const json& j)
{
    return {event_kind_from_string(j.at("kind").get<std::string>()), j.at("turn").get<int>(),
            j.at("message").get<std::string>(), j.value("trigger_id", std::string())};
}

template <typename T, typename F>
json array_of(const std::vector<T>& items, F&& f)
{
    json out = json::array();
    for (const auto& item : items)
        out.push_back(f(item));
    return out;
}

// Fields common to Session and Snapshot.
template <typename S>
void write_mutable(json& j, const S& s)
{
    j["lines"] = array_of(s.lines, line_to_json);
    j["runtimes"] = array_of(s.runtimes, runtime_to_json);
    j["fallback_clock"] = {{"lines_since_last_fire", s.clock.lines_since_last_fire}};
    j["turn"] = s.turn;
    j["state"] = std::string(to_string(s.state));
    j["error_reason"] = s.error_reason;
    j["firings"] = array_of(s.firings, firing_to_json);
    j["events"] = array_of(s.events, event_to_json);
}

template <typename S>
void read_mutable(const json& j, S& s)
{
    for (const auto& l : j.at("lines"))
        s.lines.push_back(line_from_json(l));
    for (const auto& r : j.at("runtimes"))
        s.runtimes.push_back(runtime_from_json(r));
    s.clock.lines_since_last_fire = j.at("fallback_clock").at("lines_since_last_fire").get<int>();
    s.turn = j.at("turn").get<int>();
    s.state = state_from_string(j.at("state").get<std::string>());
    s.error_reason = j.value("error_reason", std::string());
    for (const auto& f : j.at("firings"))
        s.firings.push_back(firing_from_json(f));
    for (const auto& e : j.at("events"))
        s.events.push_back(event_from_json(e));
}

}  // namespace

json firing_to_json(const FiringEvent& f)
{
    return {{"turn", f.turn},
            {"trigger_id", f.trigger_id},
            {"action_index", f.action_index},
            {"injected", line_to_json(f.injected)},
            {"ended_session", f.ended_session},
            {"line_index", f.line_index}};
}

json event_to_json(const EngineEvent& e)
{
    json j = {{"kind", std::string(to_string(e.kind))}, {"turn", e.turn}, {"message", e.message}};
    if (!e.trigger_id.empty())
        j["trigger_id"] = e.trigger_id;
    return j;
}

json session_to_json(const Session& s)
{
    json j = {{"id", s.id},
              {"definition", story_to_json(s.definition)},
              {"mode", std::string(to_string(s.mode))},
              {"seed", s.seed}};
    write_mutable(j, s);
    return j;
}

Session session_from_json(const json& j)
{
    Session s;
    s.id = j.at("id").get<std::string>();
    s.definition = story_from_json(j.at("definition"));
    s.mode = mode_from_string(j.at("mode").get<std::string>());
    s.seed = j.value("seed", std::uint64_t{0});
    read_mutable(j, s);
    if (s.runtimes.size() != s.definition.triggers.size())
        throw std::invalid_argument("session runtimes do not match the story's triggers");
    for (std::size_t i = 0; i < s.runtimes.size(); ++i)
        if (s.runtimes[i].trigger_id != s.definition.triggers[i].id)
            throw std::invalid_argument("session runtime order does not match the story's triggers");
    return s;
}

json snapshot_to_json(const Snapshot& s)
{
    json j = {{"session_id", s.session_id}, {"line_count", s.line_count}};
    write_mutable(j, s);
    return j;
}

Snapshot snapshot_from_json(const json& j)
{
    Snapshot s;
    s.session_id = j.at("session_id").get<std::string>();
    s.line_count = j.at("line_count").get<std::size_t>();
    read_mutable(j, s);
    return s;
}

}  // namespace stagehand
