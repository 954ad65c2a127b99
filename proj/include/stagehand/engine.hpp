#pragma once

// The turn loop: one generated line per step, player interception, drama
// manager invocation after each dialogue line, snapshots and reset.

#include <optional>
#include <stdexcept>
#include <string_view>

#include "stagehand/backend.hpp"
#include "stagehand/drama_manager.hpp"
#include "stagehand/session.hpp"

namespace stagehand {

struct EngineOptions {
    GenerationParams simulation = default_simulation_params();
    DramaOptions drama;
    int retries = 3;              // re-issues of the same prompt after a parse or backend failure
    std::size_t line_cap = 200;   // sessions reaching this many lines end as Errored("length cap")
};

struct StepOutcome {
    std::optional<ScriptLine> appended;
    std::optional<FiringEvent> firing;
    SessionState new_state = SessionState::Running;
    bool awaiting_player = false;
};

// Operation invoked in a state that does not allow it.
class SessionStateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Precondition: state == Running (SessionStateError otherwise). Backend and
// parse failures that survive the retries leave the session as it was before
// the step, except for the event log, with state Errored.
StepOutcome step(Session& session, CompletionBackend& backend, const EngineOptions& options = {});

// Precondition: state == AwaitingPlayer. Throws std::invalid_argument for
// text that is empty after trimming or spans more than one line.
StepOutcome submit_player_line(Session& session, std::string_view text, CompletionBackend& backend,
                               const EngineOptions& options = {});

// Steps until the session ends, errors, or max_turns dialogue lines were appended.
Session& run_autonomous(Session& session, int max_turns, CompletionBackend& backend,
                        const EngineOptions& options = {});

Snapshot snapshot(const Session& session);

// Throws std::invalid_argument for a snapshot of another session.
void reset_to(Session& session, const Snapshot& snap);

}  // namespace stagehand
