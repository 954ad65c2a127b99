#include "stagehand/drama_manager.hpp"

#include "stagehand/prompt.hpp"

namespace stagehand {

bool cheap_gates(const Trigger& trigger, const TriggerRuntime& runtime, const Session& session)
{
    if (!runtime.active)
        return false;
    for (const auto& id : trigger.requires_fired)
        if (session.runtime_for(id).fire_count < 1)
            return false;
    for (const auto& id : trigger.requires_not_fired)
        if (session.runtime_for(id).fire_count != 0)
            return false;
    if (runtime.last_fired_turn && session.turn - *runtime.last_fired_turn <= trigger.cooldown_turns)
        return false;
    if (trigger.fallback_k && session.clock.lines_since_last_fire < *trigger.fallback_k)
        return false;
    return true;
}

FiringEvent fire(Session& session, std::size_t trigger_index)
{
    const Trigger& trigger = session.definition.triggers.at(trigger_index);
    TriggerRuntime& runtime = session.runtimes.at(trigger_index);
    const int n = static_cast<int>(trigger.actions.size());

    FiringEvent event;
    event.turn = session.turn;
    event.trigger_id = trigger.id;
    event.action_index = runtime.next_action_index;
    event.injected = StageAction{trigger.actions.at(runtime.next_action_index),
                                 InjectedByTrigger{trigger.id, runtime.next_action_index}};
    event.line_index = session.lines.size();
    session.lines.emplace_back(event.injected);

    runtime.next_action_index += 1;
    if (trigger.repeatable) {
        runtime.next_action_index %= n;
    } else if (runtime.next_action_index >= n) {
        runtime.active = false;
    }
    runtime.fire_count += 1;
    runtime.last_fired_turn = session.turn;
    session.clock.lines_since_last_fire = 0;

    if (trigger.type == TriggerType::Ending) {
        session.state = SessionState::Ended;
        event.ended_session = true;
    }

    session.firings.push_back(event);
    session.log(EngineEvent::Kind::Firing, "fired action " + std::to_string(event.action_index), trigger.id);
    return event;
}

std::optional<FiringEvent> evaluate(Session& session, CompletionBackend& backend, const DramaOptions& options)
{
    const auto& triggers = session.definition.triggers;
    for (std::size_t i = 0; i < triggers.size(); ++i) {
        const Trigger& trigger = triggers[i];
        if (!cheap_gates(trigger, session.runtimes[i], session))
            continue;
        if (trigger.is_pure_fallback())
            return fire(session, i);

        const auto prompt = build_trigger_check_prompt(session.definition, session.lines, trigger);
        std::string answer;
        for (int attempt = 0;; ++attempt) {
            try {
                answer = backend.complete(prompt.text, options.check_params);
                break;
            } catch (const BackendError& e) {
                session.log(EngineEvent::Kind::BackendError, e.what(), trigger.id);
                if (attempt >= options.retries)
                    throw;
            }
        }

        bool met = false;
        try {
            met = parse_yes_no(answer);
        } catch (const AmbiguousAnswer& e) {
            session.log(EngineEvent::Kind::AmbiguousAnswer, e.what(), trigger.id);
        }
        if (met)
            return fire(session, i);
    }
    return std::nullopt;
}

}  // namespace stagehand
