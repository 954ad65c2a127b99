#include <chrono>

#include <gtest/gtest.h>

#include "stagehand/engine.hpp"
#include "test_support.hpp"

using namespace stagehand;
using namespace stagehand::testing;

namespace {

Session make_session(Mode mode, std::vector<Trigger> triggers = {})
{
    auto def = small_story();
    def.triggers = std::move(triggers);
    return Session::create("s1", def, mode);
}

int count_dialogue(const Session& s)
{
    int n = 0;
    for (const auto& l : s.lines)
        n += is_dialogue(l);
    return n;
}

}  // namespace

TEST(Step, InterceptsPlayerLine)
{
    auto s = make_session(Mode::Interactive);
    ScriptedBackend backend;
    backend.push_simulation("<line>Player: I think we should talk.</line>");
    const auto out = step(s, backend);
    EXPECT_TRUE(out.awaiting_player);
    EXPECT_FALSE(out.appended);
    EXPECT_EQ(out.new_state, SessionState::AwaitingPlayer);
    EXPECT_TRUE(s.lines.empty());
    EXPECT_EQ(s.turn, 0);
    EXPECT_EQ(s.events.back().kind, EngineEvent::Kind::Intercepted);
    EXPECT_THROW(step(s, backend), SessionStateError);
}

TEST(Step, DialogueAndFiringInOneOutcome)
{
    auto s = make_session(Mode::Interactive, {basic_trigger("t", "Has Ben complained?", {"Ava sighs."})});
    ScriptedBackend backend;
    backend.push_simulation("<line>Ben: This soup is cold.</line>");
    backend.push_check("YES");
    const auto out = step(s, backend);
    ASSERT_TRUE(out.appended);
    ASSERT_TRUE(out.firing);
    EXPECT_EQ(s.lines.size(), 2u);
    EXPECT_EQ(s.rendered_script(), "*A quiet room*\nBen: This soup is cold.\n*Ava sighs.*");
    EXPECT_EQ(s.turn, 1);
}

TEST(Step, AutonomousDoesNotIntercept)
{
    auto s = make_session(Mode::Autonomous);
    ScriptedBackend backend;
    backend.push_simulation("<line>Player: Hello there.</line>");
    const auto out = step(s, backend);
    ASSERT_TRUE(out.appended);
    EXPECT_FALSE(out.awaiting_player);
    EXPECT_EQ(s.lines.size(), 1u);
}

TEST(Step, GeneratedStageActionSkipsDramaManager)
{
    auto s = make_session(Mode::Autonomous, {basic_trigger("t", "c", {"x"})});
    ScriptedBackend backend;
    backend.push_simulation("<line>*Ben slams the door*</line>");
    const auto out = step(s, backend);
    ASSERT_TRUE(out.appended);
    EXPECT_EQ(s.turn, 0);
    EXPECT_EQ(s.clock.lines_since_last_fire, 0);
    EXPECT_EQ(backend.call_count(), 1u);
}

TEST(Step, RetriesParseFailuresThenSucceeds)
{
    auto s = make_session(Mode::Autonomous);
    ScriptedBackend backend;
    backend.push_simulation("no tags at all");
    backend.push_simulation("<line>Narrator: hm</line>");
    backend.push_simulation("<line>Ava: finally</line>");
    const auto out = step(s, backend);
    ASSERT_TRUE(out.appended);
    EXPECT_EQ(backend.call_count(), 3u);
    const auto log = backend.request_log();
    EXPECT_EQ(log[0], log[1]);
    EXPECT_EQ(log[1], log[2]);
}

TEST(Step, ErrorsAfterRetriesExhausted)
{
    auto s = make_session(Mode::Autonomous);
    ScriptedBackend backend;
    for (int i = 0; i < 4; ++i)
        backend.push_simulation("garbage");
    backend.push_simulation("<line>Ava: too late</line>");
    const auto out = step(s, backend);
    EXPECT_EQ(out.new_state, SessionState::Errored);
    EXPECT_EQ(backend.call_count(), 4u);
    EXPECT_TRUE(s.lines.empty());
    EXPECT_NE(s.error_reason.find("parse"), std::string::npos);
}

TEST(Step, CheckFailureRollsBackTheLine)
{
    auto s = make_session(Mode::Autonomous, {basic_trigger("t", "c", {"x"})});
    ScriptedBackend backend;
    backend.push_simulation("<line>Ava: hi</line>");
    const auto out = step(s, backend);  // trigger checks find nothing queued
    EXPECT_EQ(out.new_state, SessionState::Errored);
    EXPECT_TRUE(s.lines.empty());
    EXPECT_EQ(s.turn, 0);
    EXPECT_EQ(s.clock.lines_since_last_fire, 0);
}

TEST(Step, LengthCap)
{
    auto s = make_session(Mode::Autonomous);
    ScriptedBackend backend;
    for (int i = 0; i < 5; ++i)
        backend.push_simulation("<line>Ava: again</line>");
    EngineOptions opts;
    opts.line_cap = 3;
    run_autonomous(s, 10, backend, opts);
    EXPECT_EQ(s.state, SessionState::Errored);
    EXPECT_EQ(s.error_reason, "length cap");
    EXPECT_EQ(s.lines.size(), 3u);
}

TEST(SubmitPlayerLine, AppendsAndRunsDramaManager)
{
    auto s = make_session(Mode::Interactive, {basic_trigger("t", "Has the player spoken to Ben?", {"Ben looks up."})});
    ScriptedBackend backend;
    backend.push_simulation("<line>Player: hmm</line>");
    backend.push_check("YES");
    step(s, backend);
    ASSERT_EQ(s.state, SessionState::AwaitingPlayer);
    const auto out = submit_player_line(s, "  Byron, you've been quiet.  ", backend);
    ASSERT_TRUE(out.firing);
    EXPECT_EQ(s.rendered_script(), "*A quiet room*\nPlayer: Byron, you've been quiet.\n*Ben looks up.*");
    EXPECT_EQ(s.state, SessionState::Running);
    EXPECT_EQ(s.turn, 1);
}

TEST(SubmitPlayerLine, StateAndTextErrors)
{
    auto s = make_session(Mode::Interactive);
    ScriptedBackend backend;
    EXPECT_THROW(submit_player_line(s, "hello", backend), SessionStateError);
    backend.push_simulation("<line>Player: x</line>");
    step(s, backend);
    EXPECT_THROW(submit_player_line(s, "   ", backend), std::invalid_argument);
    EXPECT_THROW(submit_player_line(s, "two\nlines", backend), std::invalid_argument);
    EXPECT_EQ(s.state, SessionState::AwaitingPlayer);
    EXPECT_TRUE(s.lines.empty());
}

TEST(SubmitPlayerLine, EndingTriggerEnds)
{
    auto t = basic_trigger("end", "Did the player say goodbye?", {"Everyone leaves."});
    t.type = TriggerType::Ending;
    auto s = make_session(Mode::Interactive, {t});
    ScriptedBackend backend;
    backend.push_simulation("<line>Player: x</line>");
    backend.push_check("YES");
    step(s, backend);
    const auto out = submit_player_line(s, "Goodbye.", backend);
    EXPECT_EQ(out.new_state, SessionState::Ended);
}

TEST(RunAutonomous, StopsAtMaxTurns)
{
    auto s = make_session(Mode::Autonomous, {basic_trigger("t", "c", {"x"})});
    ScriptedBackend backend;
    for (int i = 0; i < 10; ++i) {
        backend.push_simulation("<line>Ava: line " + std::to_string(i) + "</line>");
        backend.push_check("NO");
    }
    run_autonomous(s, 5, backend);
    EXPECT_EQ(count_dialogue(s), 5);
    EXPECT_EQ(s.lines.size(), 5u);
    EXPECT_EQ(s.state, SessionState::Running);
}

TEST(RunAutonomous, EndingStopsEarly)
{
    auto t = basic_trigger("end", "c", {"Fin."});
    t.type = TriggerType::Ending;
    auto s = make_session(Mode::Autonomous, {t});
    ScriptedBackend backend;
    for (int i = 0; i < 10; ++i)
        backend.push_simulation("<line>Ben: line " + std::to_string(i) + "</line>");
    backend.push_check("NO");
    backend.push_check("YES");
    run_autonomous(s, 10, backend);
    EXPECT_EQ(s.state, SessionState::Ended);
    EXPECT_EQ(s.turn, 2);
}

TEST(RunAutonomous, Preconditions)
{
    ScriptedBackend backend;
    auto interactive = make_session(Mode::Interactive);
    EXPECT_THROW(run_autonomous(interactive, 3, backend), SessionStateError);
    auto s = make_session(Mode::Autonomous);
    EXPECT_THROW(run_autonomous(s, 0, backend), std::invalid_argument);
}

TEST(RunAutonomous, ThirtyTurnsWellUnderASecond)
{
    auto s = make_session(Mode::Autonomous,
                          {basic_trigger("a", "ca", {"x", "y"}), basic_trigger("b", "cb", {"z"})});
    FunctionBackend backend([](std::string_view p) {
        return classify_prompt(p) == PromptKind::TriggerCheck ? "NO" : "<line>Ava: and so on</line>";
    });
    const auto t0 = std::chrono::steady_clock::now();
    run_autonomous(s, 30, backend);
    const auto elapsed = std::chrono::steady_clock::now() - t0;
    EXPECT_EQ(s.turn, 30);
    EXPECT_LT(elapsed, std::chrono::seconds(1));
}

TEST(Snapshot, ResetReplaysIdenticalSuffix)
{
    auto make_backend = [] {
        auto b = std::make_unique<ScriptedBackend>();
        for (int i = 0; i < 10; ++i) {
            b->push_simulation("<line>Ava: line " + std::to_string(i) + "</line>");
            b->push_check(i % 3 == 0 ? "YES" : "NO");
        }
        return b;
    };
    auto s = make_session(Mode::Autonomous, {basic_trigger("t", "c", {"a", "b", "c", "d"})});
    auto backend = make_backend();
    run_autonomous(s, 3, *backend);
    const Snapshot snap = snapshot(s);
    const auto lines_at_snap = s.lines.size();
    const auto runtimes_at_snap = s.runtimes;

    // Continue, remembering what the continuation consumed.
    auto remaining = backend->remaining();
    run_autonomous(s, 4, *backend);
    const std::string first = s.rendered_script();

    reset_to(s, snap);
    EXPECT_EQ(s.lines.size(), lines_at_snap);
    EXPECT_EQ(s.runtimes, runtimes_at_snap);
    ScriptedBackend replay(remaining);
    run_autonomous(s, 4, replay);
    EXPECT_EQ(s.rendered_script(), first);
}

TEST(Snapshot, ResetRestoresRuntimesAndEndedState)
{
    auto t = basic_trigger("end", "c", {"Fin."});
    t.type = TriggerType::Ending;
    auto s = make_session(Mode::Autonomous, {t});
    ScriptedBackend backend;
    backend.push_simulation("<line>Ava: hi</line>");
    backend.push_check("YES");
    const Snapshot before = snapshot(s);
    step(s, backend);
    ASSERT_EQ(s.state, SessionState::Ended);
    ASSERT_EQ(s.runtimes[0].fire_count, 1);
    reset_to(s, before);
    EXPECT_EQ(s.state, SessionState::Running);
    EXPECT_EQ(s.runtimes[0].fire_count, 0);
    EXPECT_TRUE(s.runtimes[0].active);
    EXPECT_EQ(s.rendered_script(), "*A quiet room*");
}

TEST(Snapshot, ForeignSnapshotRejected)
{
    auto a = make_session(Mode::Autonomous);
    auto b = Session::create("other", small_story(), Mode::Autonomous);
    EXPECT_THROW(reset_to(a, snapshot(b)), std::invalid_argument);
}
