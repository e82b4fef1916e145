#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>

#include <nlohmann/json.hpp>

#include "geo/engine.hpp"

namespace geo {

using json = nlohmann::json;

RemoteCompleter::RemoteCompleter(std::string base_url, std::string api_key_env,
                                 RateLimiter* limiter)
    : base_url_(std::move(base_url)), limiter_(limiter) {
    const char* key = std::getenv(api_key_env.c_str());
    if (!key || !*key)
        throw AuthError("environment variable " + api_key_env +
                        " is not set; cannot reach remote completion backend");
    api_key_ = key;
}

std::string RemoteCompleter::complete(const std::string& prompt,
                                      const CompletionParams& params) {
    if (limiter_) limiter_->acquire();

    json body;
    body["model"] = params.model;
    body["temperature"] = params.temperature;
    body["messages"] = json::array(
        {json{{"role", "user"}, {"content", prompt}}});

    httplib::Client client(base_url_);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    client.set_bearer_token_auth(api_key_);

    auto res = client.Post("/v1/chat/completions", body.dump(),
                           "application/json");
    if (!res)
        throw TimeoutError("no response from " + base_url_ + ": " +
                           httplib::to_string(res.error()));
    if (res->status == 401 || res->status == 403)
        throw AuthError("authentication rejected by " + base_url_);
    if (res->status == 429)
        throw RateLimitError("rate limit exhausted at " + base_url_);
    if (res->status != 200)
        throw EngineError("completion backend returned HTTP " +
                          std::to_string(res->status));

    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("choices") ||
        reply["choices"].empty())
        throw EngineError("malformed completion payload from " + base_url_);
    return reply["choices"][0]["message"]["content"].get<std::string>();
}

}  // namespace geo
