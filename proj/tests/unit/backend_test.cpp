#include <atomic>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "stagehand/backend.hpp"
#include "stagehand/prompt.hpp"
#include "test_support.hpp"

using namespace stagehand;
using namespace stagehand::testing;
using nlohmann::json;

namespace {

std::string sim_prompt()
{
    return build_simulation_prompt(small_story(), {}).text;
}

std::string check_prompt(const std::string& condition = "Is it raining?")
{
    return build_trigger_check_prompt(small_story(), {}, basic_trigger("t", condition, {"x"})).text;
}

// Local stand-in for a chat-completions provider.
class StubServer {
public:
    explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler)
    {
        server_.Post("/v1/chat/completions", [this, handler](const httplib::Request& req, httplib::Response& res) {
            ++requests;
            last_body = req.body;
            last_auth = req.get_header_value("Authorization");
            handler(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer()
    {
        server_.stop();
        thread_.join();
    }

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

    std::atomic<int> requests{0};
    std::string last_body;
    std::string last_auth;

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

const char* kStubReply = R"({"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"<line>Ava: Hi</line>"}}]})";

}  // namespace

TEST(ClassifyPrompt, Instructions)
{
    EXPECT_EQ(classify_prompt(sim_prompt()), PromptKind::Simulation);
    EXPECT_EQ(classify_prompt(check_prompt()), PromptKind::TriggerCheck);
    EXPECT_EQ(classify_prompt(std::string(kSuggestInstruction) + "\n" + std::string(kYesNoInstruction)),
              PromptKind::TriggerCheck);
}

TEST(ScriptedBackend, QueueSemantics)
{
    ScriptedBackend backend({{Matcher::simulation(), "<line>Ava: Hi</line>"}, {Matcher::trigger_check(), "NO"}});
    const auto params = default_simulation_params();
    EXPECT_EQ(backend.complete(check_prompt(), params), "NO");  // skips the non-matching head
    EXPECT_EQ(backend.complete(sim_prompt(), params), "<line>Ava: Hi</line>");
    try {
        backend.complete(sim_prompt(), params);
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.kind(), BackendError::Kind::QueueExhausted);
    }
    EXPECT_EQ(backend.call_count(), 3u);
}

TEST(ScriptedBackend, ContainsAndAnyMatchers)
{
    ScriptedBackend backend;
    backend.push(Matcher::contains("Is it snowing?"), "YES");
    backend.push(Matcher::any(), "NO");
    const auto params = default_trigger_check_params();
    EXPECT_EQ(backend.complete(check_prompt("Is it raining?"), params), "NO");
    EXPECT_EQ(backend.complete(check_prompt("Is it snowing?"), params), "YES");
    EXPECT_TRUE(backend.remaining().empty());
}

TEST(ScriptedBackend, SeededPoolsAreDeterministic)
{
    ScriptedFixture fx = ScriptedFixture::from_json(json::parse(R"({
        "responses": [{"match": "simulation", "response": "<line>Ava: first</line>"}],
        "line_pool": ["<line>Ava: a</line>", "<line>Ben: b</line>", "<line>Ava: c</line>"],
        "yes_rate": 0.5})"));
    auto draw = [&](std::uint64_t seed) {
        ScriptedBackend b(fx, seed);
        std::string out;
        for (int i = 0; i < 20; ++i) {
            out += b.complete(sim_prompt(), default_simulation_params());
            out += b.complete(check_prompt(), default_trigger_check_params());
        }
        return out;
    };
    EXPECT_EQ(draw(7), draw(7));
    EXPECT_NE(draw(7), draw(8));
    EXPECT_EQ(draw(7).rfind("<line>Ava: first</line>", 0), 0u);
}

TEST(ScriptedBackend, FixtureRoundTrip)
{
    ScriptedFixture fx;
    fx.responses = {{Matcher::simulation(), "a"}, {Matcher::contains("zz"), "b"}, {Matcher::any(), "c"}};
    fx.yes_rate = 0.25;
    const auto back = ScriptedFixture::from_json(fx.to_json());
    ASSERT_EQ(back.responses.size(), 3u);
    EXPECT_EQ(back.responses[1].matcher.kind, Matcher::Kind::PromptContains);
    EXPECT_EQ(back.responses[1].matcher.substring, "zz");
    EXPECT_EQ(*back.yes_rate, 0.25);
    EXPECT_THROW(ScriptedFixture::from_json(json::parse(R"({"yes_rate": 2})")), std::invalid_argument);
}

TEST(GenerationParams, Checks)
{
    GenerationParams p;
    p.timeout = std::chrono::milliseconds(0);
    EXPECT_THROW(p.check(), std::invalid_argument);
    p = {};
    p.max_tokens = 0;
    EXPECT_THROW(p.check(), std::invalid_argument);
    EXPECT_EQ(default_trigger_check_params().max_tokens, 4);
    EXPECT_EQ(default_simulation_params().max_tokens, 256);
    EXPECT_EQ(default_simulation_params().temperature, 1.0);
    EXPECT_EQ(default_simulation_params().timeout, std::chrono::seconds(30));
}

TEST(HttpBackend, ExtractsContentFromStub)
{
    StubServer stub([](const httplib::Request&, httplib::Response& res) { res.set_content(kStubReply, "application/json"); });
    HttpBackend backend({stub.base_url(), "secret", "test-model"});
    EXPECT_EQ(backend.complete(sim_prompt(), default_simulation_params()), "<line>Ava: Hi</line>");

    const auto body = json::parse(stub.last_body);
    EXPECT_EQ(body.at("model"), "test-model");
    ASSERT_EQ(body.at("messages").size(), 1u);
    EXPECT_EQ(body.at("messages")[0].at("role"), "user");
    EXPECT_EQ(body.at("messages")[0].at("content"), sim_prompt());
    EXPECT_EQ(body.at("max_tokens"), 256);
    EXPECT_EQ(stub.last_auth, "Bearer secret");
}

TEST(HttpBackend, NeverRetriesOnHttpError)
{
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        res.status = 503;
        res.set_content("overloaded", "text/plain");
    });
    HttpBackend backend({stub.base_url(), "", "m"});
    try {
        backend.complete(sim_prompt(), default_simulation_params());
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.kind(), BackendError::Kind::HttpStatus);
        EXPECT_EQ(e.http_status(), 503);
    }
    EXPECT_EQ(stub.requests.load(), 1);
}

TEST(HttpBackend, MalformedResponse)
{
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"choices":[]})", "application/json");
    });
    HttpBackend backend({stub.base_url(), "", "m"});
    try {
        backend.complete(sim_prompt(), default_simulation_params());
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.kind(), BackendError::Kind::MalformedResponse);
    }
}

TEST(HttpBackend, Timeout)
{
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(600));
        res.set_content(kStubReply, "application/json");
    });
    HttpBackend backend({stub.base_url(), "", "m"});
    GenerationParams p;
    p.timeout = std::chrono::milliseconds(150);
    try {
        backend.complete(sim_prompt(), p);
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.kind(), BackendError::Kind::Timeout);
    }
    EXPECT_EQ(stub.requests.load(), 1);
}

TEST(HttpBackend, Unreachable)
{
    HttpBackend backend({"http://127.0.0.1:1/v1", "", "m"});
    GenerationParams p;
    p.timeout = std::chrono::milliseconds(500);
    EXPECT_THROW(backend.complete(sim_prompt(), p), BackendError);
}

TEST(HttpBackend, EnvConfig)
{
    ::setenv("DL_API_BASE_URL", "http://example.test/api", 1);
    ::setenv("DL_MODEL", "m2", 1);
    ::unsetenv("DL_API_KEY");
    const auto cfg = HttpBackendConfig::from_env();
    EXPECT_EQ(cfg.base_url, "http://example.test/api");
    EXPECT_EQ(cfg.model, "m2");
    EXPECT_TRUE(cfg.api_key.empty());
    ::unsetenv("DL_API_BASE_URL");
    ::unsetenv("DL_MODEL");
    EXPECT_THROW(HttpBackend({"no-scheme", "", "m"}), std::invalid_argument);
}
