#include <atomic>
#include <thread>

#include <gtest/gtest.h>

#include "service_harness.hpp"
#include "stagehand/transcript.hpp"

using namespace stagehand;
using namespace stagehand::testing;
using nlohmann::json;

namespace {

std::string small_story_json(bool with_player = false)
{
    return story_to_json(small_story(with_player)).dump();
}

std::string fixture_json()
{
    return read_text(data_path("golden/sepideh_byron.story.json"));
}

void expect_envelope(const Reply& r, int status, const std::string& code)
{
    EXPECT_EQ(r.status, status) << r.raw;
    ASSERT_TRUE(r.body.is_object()) << r.raw;
    EXPECT_EQ(r.body.value("code", ""), code) << r.raw;
    EXPECT_TRUE(r.body.contains("message"));
    EXPECT_TRUE(r.body.contains("detail"));
}

}  // namespace

TEST(Service, HealthAndUnknownRoutes)
{
    TempDir tmp;
    BackendPool pool;
    ServiceHarness h(tmp.path(), pool.factory());
    const auto health = h.get("/health");
    EXPECT_EQ(health.status, 200);
    EXPECT_EQ(health.body.at("ok"), true);
    expect_envelope(h.get("/nowhere"), 404, "not_found");
}

TEST(Service, NotFoundPaths)
{
    TempDir tmp;
    BackendPool pool;
    ServiceHarness h(tmp.path(), pool.factory());
    expect_envelope(h.get("/sessions/session-99"), 404, "not_found");
    expect_envelope(h.post("/sessions/session-99/step"), 404, "not_found");
    expect_envelope(h.get("/stories/story-7"), 404, "not_found");
    expect_envelope(h.post("/sessions", {{"story_id", "story-7"}}), 404, "not_found");
    expect_envelope(h.get("/sessions/session-99/export"), 404, "not_found");
}

TEST(Service, ValidationErrorsAre400)
{
    TempDir tmp;
    BackendPool pool;
    ServiceHarness h(tmp.path(), pool.factory());
    expect_envelope(h.post_raw("/stories", "{not json"), 400, "validation");

    auto doc = story_to_json(small_story());
    doc["triggers"] = json::array({{{"id", "t"}, {"condition", ""}, {"actions", {"x"}}}});
    const auto bad = h.post("/stories", doc);
    expect_envelope(bad, 400, "validation");
    EXPECT_EQ(bad.body.at("detail").at("path"), "/triggers/0/condition");

    expect_envelope(h.post("/sessions", json::object()), 400, "validation");
    const auto id = h.open_session(small_story_json(true));
    expect_envelope(h.post("/sessions/" + id + "/reset", {{"line_count", "zero"}}), 400, "validation");
    expect_envelope(h.post("/sessions/" + id + "/annotations",
                           {{"kind", "trigger_accuracy"}, {"target", 0}, {"value", true}}),
                    400, "validation");
    EXPECT_EQ(h.get("/sessions").body.size(), 1u);
}

TEST(Service, StoryCrudReportsWarnings)
{
    TempDir tmp;
    BackendPool pool;
    ServiceHarness h(tmp.path(), pool.factory());
    const auto created = h.post("/stories", json::parse(small_story_json(false)));
    ASSERT_EQ(created.status, 201);
    const std::string id = created.body.at("id");
    ASSERT_EQ(created.body.at("warnings").size(), 1u);
    EXPECT_EQ(created.body.at("warnings")[0].at("code"), "no-player-character");

    auto edited = story_to_json(small_story(true));
    edited["title"] = "Renamed";
    const auto put = h.put("/stories/" + id, edited);
    EXPECT_EQ(put.status, 200) << put.raw;
    EXPECT_TRUE(put.body.at("warnings").empty());
    EXPECT_EQ(h.get("/stories/" + id).body.at("story").at("title"), "Renamed");
    EXPECT_EQ(h.get("/stories").body.size(), 1u);
}

TEST(Service, InteractiveRoundTripWithFixtureStory)
{
    TempDir tmp;
    BackendPool pool;
    ServiceHarness h(tmp.path(), pool.factory());
    auto backend = pool.get("session-1");
    backend->push_simulation("<line>Sepideh: Mina, it's so good to see you.</line>");
    backend->push_check("NO");
    backend->push_check("NO");
    backend->push_simulation("<line>Mina: It smells wonderful.</line>");
    backend->push_check("YES");  // after the player's line: Sepideh noticed
    backend->push_simulation("<line>Byron: I'm going out.</line>");
    backend->push_check("NO");
    backend->push_check("YES");  // Byron left the table

    const auto id = h.open_session(fixture_json());
    ASSERT_EQ(id, "session-1");
    EXPECT_EQ(h.get("/sessions/" + id).body.at("mode"), "interactive");

    auto r = h.post("/sessions/" + id + "/step");
    ASSERT_EQ(r.status, 200) << r.raw;
    EXPECT_EQ(r.body.at("outcome").at("appended").at("speaker"), "Sepideh");

    r = h.post("/sessions/" + id + "/step");
    ASSERT_EQ(r.status, 200) << r.raw;
    EXPECT_TRUE(r.body.at("outcome").at("awaiting_player"));
    EXPECT_EQ(r.body.at("session").at("state"), "awaiting_player");
    expect_envelope(h.post("/sessions/" + id + "/step"), 409, "conflict");
    expect_envelope(h.post("/sessions/" + id + "/player-line", {{"text", "a\nb"}}), 400, "validation");

    r = h.post("/sessions/" + id + "/player-line", {{"text", "Byron, you've been quiet."}, {"since", 1}});
    ASSERT_EQ(r.status, 200) << r.raw;
    EXPECT_EQ(r.body.at("outcome").at("firing").at("trigger_id"), "trigger-0");
    const auto& lines = r.body.at("session").at("lines");
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(lines[0].at("index"), 1);
    EXPECT_EQ(lines[0].at("speaker"), "Mina");
    EXPECT_EQ(lines[1].at("text"), "Sepideh raises her voice to ask Byron if he's feeling okay.");
    expect_envelope(h.post("/sessions/" + id + "/player-line", {{"text", "again"}}), 409, "conflict");

    r = h.post("/sessions/" + id + "/step");
    ASSERT_EQ(r.status, 200) << r.raw;
    EXPECT_EQ(r.body.at("session").at("state"), "ended");
    expect_envelope(h.post("/sessions/" + id + "/step"), 409, "conflict");

    ASSERT_EQ(h.post("/sessions/" + id + "/annotations",
                     {{"kind", "trigger_accuracy"}, {"target", 0}, {"value", true}, {"author", "ana"}})
                  .status,
              201);
    expect_envelope(h.post("/sessions/" + id + "/annotations",
                           {{"kind", "trigger_accuracy"}, {"target", 0}, {"value", false}, {"author", "ana"}}),
                    409, "conflict");
    ASSERT_EQ(h.post("/sessions/" + id + "/annotations",
                     {{"kind", "dialogue_quality"}, {"target", 3}, {"value", false}, {"note", "abrupt"}})
                  .status,
              201);

    const auto exp = h.get("/sessions/" + id + "/export");
    ASSERT_EQ(exp.status, 200);
    const auto& doc = exp.body;
    EXPECT_EQ(doc.at("format"), kExportFormat);
    EXPECT_EQ(doc.at("state"), "ended");
    EXPECT_EQ(doc.at("lines").size(), 5u);
    EXPECT_EQ(doc.at("firings").size(), 2u);
    EXPECT_EQ(doc.at("annotations").size(), 2u);
    EXPECT_EQ(doc.at("report").at("ended_by"), "byron-leaves");
    EXPECT_EQ(doc.at("report").at("simulation_length"), 3);
    EXPECT_EQ(doc.at("report").at("action_count"), 2);
    EXPECT_EQ(recount_report(doc), report_from_json(doc.at("report")));

    auto c = h.client();
    auto txt = c.Get("/sessions/" + id + "/export.txt");
    ASSERT_TRUE(txt);
    EXPECT_EQ(txt->body, doc.at("script").get<std::string>() + "\n");
    EXPECT_EQ(h.get("/sessions/" + id + "/export.json").body, doc);
}

TEST(Service, StepBackendFailureIs502AndResumeRecovers)
{
    TempDir tmp;
    BackendPool pool;
    ServiceHarness h(tmp.path(), pool.factory());
    const auto id = h.open_session(small_story_json(false));
    const auto r = h.post("/sessions/" + id + "/step");  // queue empty
    expect_envelope(r, 502, "backend_failure");
    EXPECT_EQ(r.body.at("detail").at("session").at("state"), "errored");
    EXPECT_EQ(r.body.at("detail").at("event").at("kind"), "errored");
    expect_envelope(h.post("/sessions/" + id + "/step"), 409, "conflict");

    pool.get(id)->push_simulation("<line>Ava: Back again.</line>");
    EXPECT_EQ(h.post("/sessions/" + id + "/resume").body.at("state"), "running");
    EXPECT_EQ(h.post("/sessions/" + id + "/step").status, 200);
}

TEST(Service, PauseBlocksStepping)
{
    TempDir tmp;
    BackendPool pool;
    ServiceHarness h(tmp.path(), pool.factory());
    const auto id = h.open_session(small_story_json(false));
    pool.get(id)->push_simulation("<line>Ava: hello</line>");
    EXPECT_EQ(h.post("/sessions/" + id + "/pause").body.at("paused"), true);
    expect_envelope(h.post("/sessions/" + id + "/step"), 409, "conflict");
    h.post("/sessions/" + id + "/resume");
    EXPECT_EQ(h.post("/sessions/" + id + "/step").status, 200);
}

TEST(Service, ResetDropsLaterMarksAndOrphanedAnnotations)
{
    TempDir tmp;
    BackendPool pool;
    ServiceHarness h(tmp.path(), pool.factory());
    const auto id = h.open_session(small_story_json(false));
    for (int i = 0; i < 4; ++i)
        pool.get(id)->push_simulation("<line>Ava: line " + std::to_string(i) + "</line>");
    for (int i = 0; i < 4; ++i)
        ASSERT_EQ(h.post("/sessions/" + id + "/step").status, 200);
    EXPECT_EQ(h.get("/sessions/" + id + "/snapshots").body.size(), 5u);
    ASSERT_EQ(h.post("/sessions/" + id + "/annotations",
                     {{"kind", "dialogue_quality"}, {"target", 3}, {"value", true}})
                  .status,
              201);
    ASSERT_EQ(h.post("/sessions/" + id + "/annotations",
                     {{"kind", "dialogue_quality"}, {"target", 0}, {"value", true}})
                  .status,
              201);

    expect_envelope(h.post("/sessions/" + id + "/reset", {{"line_count", 17}}), 404, "not_found");
    const auto r = h.post("/sessions/" + id + "/reset", {{"line_count", 2}});
    ASSERT_EQ(r.status, 200) << r.raw;
    EXPECT_EQ(r.body.at("line_count"), 2);
    EXPECT_EQ(r.body.at("turn"), 2);
    EXPECT_EQ(h.get("/sessions/" + id + "/snapshots").body.size(), 3u);
    const auto notes = h.get("/sessions/" + id + "/annotations").body;
    ASSERT_EQ(notes.size(), 1u);
    EXPECT_EQ(notes[0].at("target"), 0);

    pool.get(id)->push_simulation("<line>Ben: a different future</line>");
    ASSERT_EQ(h.post("/sessions/" + id + "/step").status, 200);
    auto c = h.client();
    EXPECT_EQ(c.Get("/sessions/" + id + "/export.txt")->body,
              "*A quiet room*\nAva: line 0\nAva: line 1\nBen: a different future\n");
}

TEST(Service, SessionsSurviveRestart)
{
    TempDir tmp;
    BackendPool pool;
    std::string id;
    {
        ServiceHarness h(tmp.path(), pool.factory());
        id = h.open_session(small_story_json(false));
        auto b = pool.get(id);
        for (int i = 0; i < 4; ++i)
            b->push_simulation("<line>Ben: " + std::to_string(i) + "</line>");
        ASSERT_EQ(h.post("/sessions/" + id + "/step").status, 200);
        ASSERT_EQ(h.post("/sessions/" + id + "/step").status, 200);
    }
    ServiceHarness h(tmp.path(), pool.factory());
    EXPECT_TRUE(h.service().load_errors().empty());
    EXPECT_EQ(h.get("/sessions/" + id).body.at("line_count"), 2);
    ASSERT_EQ(h.post("/sessions/" + id + "/step").status, 200);
    auto c = h.client();
    EXPECT_EQ(c.Get("/sessions/" + id + "/export.txt")->body, "*A quiet room*\nBen: 0\nBen: 1\nBen: 2\n");
    EXPECT_EQ(h.post("/sessions/" + id + "/reset", {{"line_count", 1}}).status, 200);

    // New ids continue after the stored ones.
    const auto second = h.open_session(small_story_json(false));
    EXPECT_EQ(second, "session-2");
}

TEST(Service, CorruptSessionFileIsQuarantinedAtStartup)
{
    TempDir tmp;
    BackendPool pool;
    {
        ServiceHarness h(tmp.path(), pool.factory());
        h.open_session(small_story_json(false));
    }
    {
        std::ofstream f(tmp.path() / "sessions" / "session-1.json", std::ios::trunc);
        f << "{\"session\": {";
    }
    ServiceHarness h(tmp.path(), pool.factory());
    ASSERT_EQ(h.service().load_errors().size(), 1u);
    EXPECT_EQ(h.get("/health").body.at("load_errors").size(), 1u);
    expect_envelope(h.get("/sessions/session-1"), 404, "not_found");
    EXPECT_EQ(h.get("/stories").body.size(), 1u);
}

TEST(Service, ConcurrentStepsOnOneSessionConflict)
{
    TempDir tmp;
    auto slow = std::make_shared<FunctionBackend>([](std::string_view) {
        std::this_thread::sleep_for(std::chrono::milliseconds(40));
        return std::string("<line>Ava: slow</line>");
    });
    ServiceHarness h(tmp.path(), [slow](const Session&) { return slow; });
    const auto id = h.open_session(small_story_json(false));

    std::atomic<int> ok{0}, busy{0}, other{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i)
        threads.emplace_back([&] {
            for (int k = 0; k < 3; ++k) {
                const auto r = h.post("/sessions/" + id + "/step");
                if (r.status == 200)
                    ++ok;
                else if (r.status == 409)
                    ++busy;
                else
                    ++other;
            }
        });
    for (auto& t : threads)
        t.join();
    EXPECT_EQ(other.load(), 0);
    EXPECT_GT(ok.load(), 0);
    EXPECT_GT(busy.load(), 0);
    const auto view = h.get("/sessions/" + id);
    EXPECT_EQ(view.body.at("line_count"), ok.load());
    EXPECT_EQ(view.body.at("turn"), ok.load());
}

TEST(Service, ConcurrentSessionsAreIndependent)
{
    TempDir tmp;
    BackendPool pool;
    ServiceHarness h(tmp.path(), pool.factory());
    std::vector<std::string> ids;
    for (int i = 0; i < 4; ++i) {
        ids.push_back(h.open_session(small_story_json(false)));
        for (int k = 0; k < 10; ++k)
            pool.get(ids.back())->push_simulation("<line>Ava: " + ids.back() + " " + std::to_string(k) + "</line>");
    }
    std::vector<std::thread> threads;
    std::atomic<int> failures{0};
    for (const auto& id : ids)
        threads.emplace_back([&, id] {
            for (int k = 0; k < 10; ++k)
                failures += h.post("/sessions/" + id + "/step").status != 200;
        });
    for (auto& t : threads)
        t.join();
    EXPECT_EQ(failures.load(), 0);
    for (const auto& id : ids) {
        const auto exp = h.get("/sessions/" + id + "/export").body;
        EXPECT_EQ(exp.at("lines").size(), 10u);
        EXPECT_EQ(exp.at("lines")[9].at("text"), id + " 9");
    }
}

TEST(BindAddress, Parses)
{
    EXPECT_EQ(parse_bind_address("0.0.0.0:9000"), (std::pair<std::string, int>{"0.0.0.0", 9000}));
    EXPECT_THROW(parse_bind_address("localhost"), std::invalid_argument);
    EXPECT_THROW(parse_bind_address("h:99999"), std::invalid_argument);
    EXPECT_THROW(parse_bind_address("h:x"), std::invalid_argument);
}
