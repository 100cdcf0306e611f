#pragma once

// Chat-completions transport over HTTP(S). Requires cpp-httplib; define
// CPPHTTPLIB_OPENSSL_SUPPORT (and link OpenSSL) for https endpoints.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <string>
#include <thread>

// Library headers first: <httplib.h> pulls in <resolv.h>, whose `_res` macro
// breaks Eigen if Eigen is included after it.
#include "causalkit/elicitation.hpp"
#include "causalkit/error.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace causalkit {

struct HttpTransportConfig {
    std::string endpoint;   // e.g. https://api.example.com/v1/chat/completions
    std::string model;
    std::string token_env;  // name of the environment variable holding the bearer token
    double temperature = 0.0;
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    std::chrono::seconds timeout{120};

    static HttpTransportConfig from_json(const nlohmann::json& j) {
        try {
            HttpTransportConfig c;
            c.endpoint = j.at("endpoint").get<std::string>();
            c.model = j.at("model").get<std::string>();
            c.token_env = j.value("token_env", std::string());
            c.temperature = j.value("temperature", 0.0);
            c.max_attempts = j.value("max_attempts", 3);
            c.initial_backoff = std::chrono::milliseconds(j.value("initial_backoff_ms", 1000));
            c.timeout = std::chrono::seconds(j.value("timeout_s", 120));
            if (c.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
            return c;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("malformed transport config: ") + e.what());
        }
    }

    static HttpTransportConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw MissingFile("cannot open '" + path + "'");
        try {
            return from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
        }
    }
};

/// Splits "scheme://host[:port]/path" into ("scheme://host[:port]", "/path").
inline std::pair<std::string, std::string> split_endpoint(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint '" + url + "' has no scheme");
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

/// POSTs {model, messages: [{role: "user", content}], temperature} and returns
/// choices[0].message.content. Connection failures, 429 and 5xx responses are
/// retried with exponential backoff; other failures surface immediately.
class HttpChatTransport : public Transport {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit HttpChatTransport(HttpTransportConfig config,
                               Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
        : config_(std::move(config)), sleeper_(std::move(sleeper)) {}

    std::string complete(const std::string& prompt) override {
        const auto [base, path] = split_endpoint(config_.endpoint);
        const nlohmann::json body = {{"model", config_.model},
                                     {"messages", {{{"role", "user"}, {"content", prompt}}}},
                                     {"temperature", config_.temperature}};
        httplib::Headers headers;
        if (!config_.token_env.empty()) {
            const char* token = std::getenv(config_.token_env.c_str());
            if (!token || !*token) throw TransportFailure("environment variable " + config_.token_env + " is not set");
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }

        auto backoff = config_.initial_backoff;
        std::string last_error;
        for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
            httplib::Client client(base);
            client.set_connection_timeout(std::chrono::seconds(30));
            client.set_read_timeout(config_.timeout);
            auto res = client.Post(path, headers, body.dump(), "application/json");
            bool retryable = false;
            if (!res) {
                last_error = "request failed: " + httplib::to_string(res.error());
                retryable = true;
            } else if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                retryable = true;
            } else if (res->status != 200) {
                throw TransportFailure("HTTP " + std::to_string(res->status) + ": " + res->body);
            } else {
                return extract_content(res->body);
            }
            if (!retryable || attempt == config_.max_attempts) break;
            sleeper_(backoff);
            backoff *= 2;
        }
        throw TransportFailure(last_error + " after " + std::to_string(config_.max_attempts) + " attempts");
    }

    static std::string extract_content(const std::string& body) {
        try {
            const auto j = nlohmann::json::parse(body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw TransportFailure(std::string("unexpected response envelope: ") + e.what());
        }
    }

private:
    HttpTransportConfig config_;
    Sleeper sleeper_;
};

}  // namespace causalkit
