#include <cstdlib>

#include <httplib.h>

#include "stagehand/backend.hpp"

namespace stagehand {

using nlohmann::json;

HttpBackendConfig HttpBackendConfig::from_env()
{
    HttpBackendConfig cfg;
    if (const char* v = std::getenv("DL_API_BASE_URL"); v && *v)
        cfg.base_url = v;
    if (const char* v = std::getenv("DL_API_KEY"); v && *v)
        cfg.api_key = v;
    if (const char* v = std::getenv("DL_MODEL"); v && *v)
        cfg.model = v;
    return cfg;
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config))
{
    std::string url = config_.base_url;
    while (!url.empty() && url.back() == '/')
        url.pop_back();
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument("base url needs a scheme: " + config_.base_url);
    auto path_begin = url.find('/', scheme_end + 3);
    if (path_begin == std::string::npos) {
        origin_ = url;
    } else {
        origin_ = url.substr(0, path_begin);
        path_prefix_ = url.substr(path_begin);
    }
}

json HttpBackend::request_body(std::string_view prompt, const GenerationParams& params,
                               const std::string& default_model)
{
    return {{"model", params.model_name.empty() ? default_model : params.model_name},
            {"messages", json::array({{{"role", "user"}, {"content", std::string(prompt)}}})},
            {"temperature", params.temperature},
            {"max_tokens", params.max_tokens}};
}

std::string HttpBackend::extract_content(std::string_view response_body)
{
    try {
        auto doc = json::parse(response_body);
        const auto& content = doc.at("choices").at(0).at("message").at("content");
        if (!content.is_string())
            throw BackendError(BackendError::Kind::MalformedResponse, "choices[0].message.content is not a string");
        return content.get<std::string>();
    } catch (const json::exception& e) {
        throw BackendError(BackendError::Kind::MalformedResponse, std::string("unexpected response body: ") + e.what());
    }
}

std::string HttpBackend::complete(std::string_view prompt, const GenerationParams& params)
{
    params.check();
    if (prompt.empty())
        throw std::invalid_argument("empty prompt");

    httplib::Client client(origin_);
    if (!client.is_valid())
        throw BackendError(BackendError::Kind::Unavailable, "cannot create a client for " + origin_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(params.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(params.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (!config_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + config_.api_key);

    const auto body = request_body(prompt, params, config_.model).dump();
    auto res = client.Post(path_prefix_ + "/chat/completions", headers, body, "application/json");
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout || err == httplib::Error::Write)
            throw BackendError(BackendError::Kind::Timeout, "request timed out: " + httplib::to_string(err));
        throw BackendError(BackendError::Kind::Unavailable, "request failed: " + httplib::to_string(err));
    }
    if (res->status != 200)
        throw BackendError(BackendError::Kind::HttpStatus,
                           "HTTP " + std::to_string(res->status) + " from " + origin_ + path_prefix_, res->status);
    return extract_content(res->body);
}

}  // namespace stagehand
