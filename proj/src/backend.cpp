#include "stagehand/backend.hpp"

#include <fstream>
#include <sstream>

#include "stagehand/prompt.hpp"

namespace stagehand {

using nlohmann::json;

void GenerationParams::check() const
{
    if (timeout.count() <= 0)
        throw std::invalid_argument("timeout must be positive");
    if (max_tokens < 1)
        throw std::invalid_argument("max_tokens must be >= 1");
    if (!(temperature >= 0.0))
        throw std::invalid_argument("temperature must be >= 0");
}

GenerationParams default_simulation_params()
{
    return {};
}

GenerationParams default_trigger_check_params()
{
    GenerationParams p;
    p.max_tokens = 4;
    return p;
}

BackendError::BackendError(Kind kind, std::string message, int http_status)
    : std::runtime_error(std::move(message)), kind_(kind), http_status_(http_status)
{
}

std::string_view to_string(BackendError::Kind kind)
{
    switch (kind) {
    case BackendError::Kind::Timeout:
        return "Timeout";
    case BackendError::Kind::HttpStatus:
        return "HttpStatus";
    case BackendError::Kind::MalformedResponse:
        return "MalformedResponse";
    case BackendError::Kind::QueueExhausted:
        return "QueueExhausted";
    case BackendError::Kind::Unavailable:
        return "Unavailable";
    }
    return "?";
}

PromptKind classify_prompt(std::string_view prompt)
{
    return prompt.find(kYesNoInstruction) != std::string_view::npos ? PromptKind::TriggerCheck
                                                                     : PromptKind::Simulation;
}

bool Matcher::matches(std::string_view prompt) const
{
    switch (kind) {
    case Kind::Any:
        return true;
    case Kind::PromptContains:
        return prompt.find(substring) != std::string_view::npos;
    case Kind::IsTriggerCheck:
        return classify_prompt(prompt) == PromptKind::TriggerCheck;
    case Kind::IsSimulation:
        return classify_prompt(prompt) == PromptKind::Simulation;
    }
    return false;
}

// ---------------------------------------------------------------------------

ScriptedFixture ScriptedFixture::from_json(const json& j)
{
    ScriptedFixture f;
    for (const auto& entry : j.value("responses", json::array())) {
        ScriptedResponse r;
        r.response = entry.at("response").get<std::string>();
        const auto match = entry.value("match", std::string("any"));
        if (entry.contains("contains"))
            r.matcher = Matcher::contains(entry.at("contains").get<std::string>());
        else if (match == "simulation")
            r.matcher = Matcher::simulation();
        else if (match == "trigger_check")
            r.matcher = Matcher::trigger_check();
        else if (match == "any")
            r.matcher = Matcher::any();
        else
            throw std::invalid_argument("unknown matcher \"" + match + "\"");
        f.responses.push_back(std::move(r));
    }
    f.line_pool = j.value("line_pool", std::vector<std::string>{});
    if (j.contains("yes_rate")) {
        double rate = j.at("yes_rate").get<double>();
        if (rate < 0.0 || rate > 1.0)
            throw std::invalid_argument("yes_rate must be within [0, 1]");
        f.yes_rate = rate;
    }
    return f;
}

ScriptedFixture ScriptedFixture::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open fixture " + path.string());
    try {
        return from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw std::runtime_error("bad fixture " + path.string() + ": " + e.what());
    }
}

json ScriptedFixture::to_json() const
{
    json entries = json::array();
    for (const auto& r : responses) {
        json e = {{"response", r.response}};
        switch (r.matcher.kind) {
        case Matcher::Kind::Any:
            e["match"] = "any";
            break;
        case Matcher::Kind::PromptContains:
            e["contains"] = r.matcher.substring;
            break;
        case Matcher::Kind::IsTriggerCheck:
            e["match"] = "trigger_check";
            break;
        case Matcher::Kind::IsSimulation:
            e["match"] = "simulation";
            break;
        }
        entries.push_back(std::move(e));
    }
    json out = {{"responses", std::move(entries)}};
    if (!line_pool.empty())
        out["line_pool"] = line_pool;
    if (yes_rate)
        out["yes_rate"] = *yes_rate;
    return out;
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptedResponse> responses)
    : queue_(std::make_move_iterator(responses.begin()), std::make_move_iterator(responses.end()))
{
}

ScriptedBackend::ScriptedBackend(const ScriptedFixture& fixture, std::uint64_t seed)
    : queue_(fixture.responses.begin(), fixture.responses.end()),
      line_pool_(fixture.line_pool),
      yes_rate_(fixture.yes_rate),
      rng_(seed)
{
}

void ScriptedBackend::push(Matcher matcher, std::string response)
{
    std::lock_guard lock(mutex_);
    queue_.push_back({std::move(matcher), std::move(response)});
}

std::string ScriptedBackend::complete(std::string_view prompt, const GenerationParams& params)
{
    params.check();
    if (prompt.empty())
        throw std::invalid_argument("empty prompt");

    std::lock_guard lock(mutex_);
    log_.emplace_back(prompt);
    for (auto it = queue_.begin(); it != queue_.end(); ++it) {
        if (it->matcher.matches(prompt)) {
            std::string response = std::move(it->response);
            queue_.erase(it);
            return response;
        }
    }

    if (classify_prompt(prompt) == PromptKind::TriggerCheck) {
        if (yes_rate_)
            return std::bernoulli_distribution(*yes_rate_)(rng_) ? "YES" : "NO";
    } else if (!line_pool_.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, line_pool_.size() - 1);
        return line_pool_[pick(rng_)];
    }
    throw BackendError(BackendError::Kind::QueueExhausted, "scripted backend has no response for this prompt");
}

std::size_t ScriptedBackend::call_count() const
{
    std::lock_guard lock(mutex_);
    return log_.size();
}

std::vector<std::string> ScriptedBackend::request_log() const
{
    std::lock_guard lock(mutex_);
    return log_;
}

std::vector<ScriptedResponse> ScriptedBackend::remaining() const
{
    std::lock_guard lock(mutex_);
    return {queue_.begin(), queue_.end()};
}

}  // namespace stagehand
