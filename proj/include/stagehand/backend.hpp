#pragma once

// Completion backends: the abstract interface the engine calls, the
// deterministic scripted backend used by tests and fixtures, and the live
// chat-completions HTTP client.

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace stagehand {

struct GenerationParams {
    std::string model_name;  // empty: backend default
    double temperature = 1.0;
    int max_tokens = 256;
    std::chrono::milliseconds timeout{30'000};

    void check() const;  // throws std::invalid_argument
};

GenerationParams default_simulation_params();
GenerationParams default_trigger_check_params();

class BackendError : public std::runtime_error {
public:
    enum class Kind { Timeout, HttpStatus, MalformedResponse, QueueExhausted, Unavailable };

    BackendError(Kind kind, std::string message, int http_status = 0);

    Kind kind() const { return kind_; }
    int http_status() const { return http_status_; }

private:
    Kind kind_;
    int http_status_;
};

std::string_view to_string(BackendError::Kind kind);

class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;

    // Returns the raw model text. Throws BackendError. Safe to call concurrently.
    virtual std::string complete(std::string_view prompt, const GenerationParams& params) = 0;
};

enum class PromptKind { Simulation, TriggerCheck };

// The YES/NO instruction wins when both instruction literals are present.
PromptKind classify_prompt(std::string_view prompt);

// ---------------------------------------------------------------------------
// Scripted backend

struct Matcher {
    enum class Kind { Any, PromptContains, IsTriggerCheck, IsSimulation };

    Kind kind = Kind::Any;
    std::string substring;

    static Matcher any() { return {}; }
    static Matcher contains(std::string s) { return {Kind::PromptContains, std::move(s)}; }
    static Matcher trigger_check() { return {Kind::IsTriggerCheck, {}}; }
    static Matcher simulation() { return {Kind::IsSimulation, {}}; }

    bool matches(std::string_view prompt) const;
};

struct ScriptedResponse {
    Matcher matcher;
    std::string response;
};

// A parsed fixture file. Queue entries are consumed first; when nothing in the
// queue matches, the optional seeded pools answer instead.
struct ScriptedFixture {
    std::vector<ScriptedResponse> responses;
    std::vector<std::string> line_pool;  // raw simulation responses
    std::optional<double> yes_rate;      // probability of "YES" for trigger checks

    static ScriptedFixture from_json(const nlohmann::json& j);
    static ScriptedFixture load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

class ScriptedBackend : public CompletionBackend {
public:
    ScriptedBackend() = default;
    explicit ScriptedBackend(std::vector<ScriptedResponse> responses);
    ScriptedBackend(const ScriptedFixture& fixture, std::uint64_t seed);

    void push(Matcher matcher, std::string response);
    void push_simulation(std::string response) { push(Matcher::simulation(), std::move(response)); }
    void push_check(std::string response) { push(Matcher::trigger_check(), std::move(response)); }

    std::string complete(std::string_view prompt, const GenerationParams& params) override;

    std::size_t call_count() const;
    std::vector<std::string> request_log() const;
    std::vector<ScriptedResponse> remaining() const;

private:
    mutable std::mutex mutex_;
    std::deque<ScriptedResponse> queue_;
    std::vector<std::string> line_pool_;
    std::optional<double> yes_rate_;
    std::mt19937_64 rng_{0};
    std::vector<std::string> log_;
};

// ---------------------------------------------------------------------------
// Live chat-completions client

struct HttpBackendConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key;
    std::string model = "gpt-4o-mini";

    // Reads DL_API_BASE_URL, DL_API_KEY, DL_MODEL; unset variables keep defaults.
    static HttpBackendConfig from_env();
};

// Sends the whole prompt as one user message to <base_url>/chat/completions
// and returns choices[0].message.content. Never retries.
class HttpBackend : public CompletionBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);

    std::string complete(std::string_view prompt, const GenerationParams& params) override;

    const HttpBackendConfig& config() const { return config_; }

    static nlohmann::json request_body(std::string_view prompt, const GenerationParams& params,
                                       const std::string& default_model);
    // Throws BackendError(MalformedResponse).
    static std::string extract_content(std::string_view response_body);

private:
    HttpBackendConfig config_;
    std::string origin_;       // scheme://host[:port]
    std::string path_prefix_;  // e.g. "/v1"
};

}  // namespace stagehand
