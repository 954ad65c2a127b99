#pragma once

// Per-dialogue-line trigger selection: cheap (LLM-free) gates first, then one
// YES/NO condition check per surviving trigger in authored order, stopping at
// the first YES.

#include <optional>

#include "stagehand/backend.hpp"
#include "stagehand/session.hpp"

namespace stagehand {

struct DramaOptions {
    GenerationParams check_params = default_trigger_check_params();
    int retries = 3;  // extra attempts after a BackendError on a condition check
};

// True iff the trigger is active, its ordering constraints hold, its cooldown
// has elapsed (strictly more than cooldown_turns turns since it last fired) and,
// for fallback triggers, at least fallback_k quiet dialogue lines have passed.
bool cheap_gates(const Trigger& trigger, const TriggerRuntime& runtime, const Session& session);

// Injects the trigger's next action and updates its runtime, the fallback
// clock and (for Ending triggers) the session state.
FiringEvent fire(Session& session, std::size_t trigger_index);

// Call once after each appended dialogue line. Ambiguous answers count as NO
// and are logged. A BackendError that survives the retries propagates; in that
// case nothing but the event log has changed.
std::optional<FiringEvent> evaluate(Session& session, CompletionBackend& backend, const DramaOptions& options = {});

}  // namespace stagehand
