#pragma once

// Chat-completion HTTP transport. Kept out of llm_client.hpp so that
// library users without a network backend never pull in httplib.

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "structkit/llm_client.hpp"

namespace structkit {

// POSTs {model, messages, ...} to <base_url>/v1/chat/completions and
// extracts choices[0].message.content.
inline Transport make_http_transport(const ClientConfig& config) {
    return [config](const GenerationRequest& req) -> TransportResult {
        httplib::Client cli(config.base_url);
        cli.set_connection_timeout(config.timeout_seconds);
        cli.set_read_timeout(config.timeout_seconds);
        httplib::Headers headers;
        if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        nlohmann::json body{
            {"model", config.model},
            {"messages", {{{"role", "user"}, {"content", req.prompt}}}},
            {"max_tokens", req.max_output_tokens},
            {"temperature", req.temperature},
        };
        if (!req.stop_sequences.empty()) body["stop"] = req.stop_sequences;
        auto res = cli.Post("/v1/chat/completions", headers, body.dump(), "application/json");
        if (!res) return {-1, ""};
        if (res->status != 200) return {res->status, res->body};
        try {
            auto j = nlohmann::json::parse(res->body);
            return {200, j.at("choices").at(0).at("message").at("content").get<std::string>()};
        } catch (const nlohmann::json::exception&) {
            return {502, "malformed completion payload"};
        }
    };
}

}  // namespace structkit
