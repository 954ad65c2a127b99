#include "stagehand/engine.hpp"

#include "stagehand/prompt.hpp"

namespace stagehand {

namespace {

bool is_player_line(const Session& session, const ScriptLine& line)
{
    const auto* d = std::get_if<Dialogue>(&line);
    return d && session.definition.player_character && d->speaker == *session.definition.player_character;
}

void enter_error(Session& session, std::string reason)
{
    session.state = SessionState::Errored;
    session.error_reason = reason;
    session.log(EngineEvent::Kind::Errored, std::move(reason));
}

// Appends a dialogue line and runs the drama manager once. On a BackendError
// the line is removed again and the error rethrown.
std::optional<FiringEvent> append_dialogue(Session& session, Dialogue line, CompletionBackend& backend,
                                           const EngineOptions& options)
{
    session.lines.emplace_back(std::move(line));
    session.turn += 1;
    session.clock.lines_since_last_fire += 1;
    try {
        return evaluate(session, backend, options.drama);
    } catch (const BackendError&) {
        session.lines.pop_back();
        session.turn -= 1;
        session.clock.lines_since_last_fire -= 1;
        throw;
    }
}

}  // namespace

StepOutcome step(Session& session, CompletionBackend& backend, const EngineOptions& options)
{
    if (session.state != SessionState::Running)
        throw SessionStateError("step requires a running session (state is " +
                                std::string(to_string(session.state)) + ")");

    StepOutcome outcome;
    if (session.lines.size() >= options.line_cap) {
        session.log(EngineEvent::Kind::LengthCap, "reached " + std::to_string(options.line_cap) + " lines");
        enter_error(session, "length cap");
        outcome.new_state = session.state;
        return outcome;
    }

    const auto prompt = build_simulation_prompt(session.definition, session.lines);
    std::optional<ScriptLine> parsed;
    std::string failure;
    for (int attempt = 0; attempt <= options.retries && !parsed; ++attempt) {
        try {
            parsed = parse_line_response(session.definition, backend.complete(prompt.text, options.simulation));
        } catch (const BackendError& e) {
            failure = std::string("backend: ") + e.what();
            session.log(EngineEvent::Kind::BackendError, e.what());
        } catch (const LineParseError& e) {
            failure = std::string("parse: ") + e.what();
            session.log(EngineEvent::Kind::ParseError, e.what());
        }
    }
    if (!parsed) {
        enter_error(session, failure);
        outcome.new_state = session.state;
        return outcome;
    }

    if (session.mode == Mode::Interactive && is_player_line(session, *parsed)) {
        session.log(EngineEvent::Kind::Intercepted, "discarded generated line: " + render_line(*parsed));
        session.state = SessionState::AwaitingPlayer;
        outcome.new_state = session.state;
        outcome.awaiting_player = true;
        return outcome;
    }

    if (auto* d = std::get_if<Dialogue>(&*parsed)) {
        try {
            outcome.firing = append_dialogue(session, *d, backend, options);
        } catch (const BackendError& e) {
            enter_error(session, std::string("backend: ") + e.what());
            outcome.new_state = session.state;
            return outcome;
        }
    } else {
        session.lines.push_back(*parsed);
    }
    outcome.appended = std::move(parsed);
    outcome.new_state = session.state;
    return outcome;
}

StepOutcome submit_player_line(Session& session, std::string_view text, CompletionBackend& backend,
                               const EngineOptions& options)
{
    if (session.state != SessionState::AwaitingPlayer)
        throw SessionStateError("player input is only accepted while awaiting the player (state is " +
                                std::string(to_string(session.state)) + ")");
    std::string line = trim(text);
    if (line.empty())
        throw std::invalid_argument("player line is empty");
    if (line.find_first_of("\r\n") != std::string::npos)
        throw std::invalid_argument("player line must be a single line");

    Dialogue d{*session.definition.player_character, std::move(line)};
    session.log(EngineEvent::Kind::PlayerLine, d.text);
    session.state = SessionState::Running;
    StepOutcome outcome;
    try {
        outcome.firing = append_dialogue(session, d, backend, options);
    } catch (const BackendError&) {
        session.state = SessionState::AwaitingPlayer;
        throw;
    }
    outcome.appended = std::move(d);
    outcome.new_state = session.state;
    return outcome;
}

Session& run_autonomous(Session& session, int max_turns, CompletionBackend& backend, const EngineOptions& options)
{
    if (session.mode != Mode::Autonomous)
        throw SessionStateError("run_autonomous requires an autonomous session");
    if (max_turns < 1)
        throw std::invalid_argument("max_turns must be >= 1");
    const int start = session.turn;
    while (session.state == SessionState::Running && session.turn - start < max_turns)
        step(session, backend, options);
    return session;
}

Snapshot snapshot(const Session& session)
{
    Snapshot snap;
    snap.session_id = session.id;
    snap.line_count = session.lines.size();
    snap.lines = session.lines;
    snap.runtimes = session.runtimes;
    snap.clock = session.clock;
    snap.turn = session.turn;
    snap.state = session.state;
    snap.error_reason = session.error_reason;
    snap.firings = session.firings;
    snap.events = session.events;
    return snap;
}

void reset_to(Session& session, const Snapshot& snap)
{
    if (snap.session_id != session.id)
        throw std::invalid_argument("snapshot belongs to session \"" + snap.session_id + "\", not \"" + session.id +
                                    "\"");
    if (snap.runtimes.size() != session.runtimes.size())
        throw std::invalid_argument("snapshot does not match the session's triggers");
    session.lines = snap.lines;
    session.runtimes = snap.runtimes;
    session.clock = snap.clock;
    session.turn = snap.turn;
    session.state = snap.state;
    session.error_reason = snap.error_reason;
    session.firings = snap.firings;
    session.events = snap.events;
    session.log(EngineEvent::Kind::Reset, "reset to line " + std::to_string(snap.line_count));
}

}  // namespace stagehand
