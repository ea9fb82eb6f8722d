#include "zsar/chat_transport.hpp"

#include "zsar/errors.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>

namespace zsar {

void LlmConfig::validate() const {
    if (max_retries < 1) throw ConfigError("llm.max_retries must be >= 1");
    if (temperature < 0.0) throw ConfigError("llm.temperature must be >= 0");
    if (model_id.empty()) throw ConfigError("llm.model_id must be set");
    if (endpoint_url.empty()) throw ConfigError("llm.endpoint_url must be set");
}

HttpChatTransport::HttpChatTransport(LlmConfig config) : config_(std::move(config)) {
    config_.validate();
    if (!config_.api_key_env_var.empty()) {
        const char* key = std::getenv(config_.api_key_env_var.c_str());
        if (key == nullptr || *key == '\0') {
            throw EnvironmentError("environment variable " + config_.api_key_env_var +
                                   " holding the LLM API key is not set");
        }
        api_key_ = key;
    }

    const std::string& url = config_.endpoint_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("llm.endpoint_url has no scheme: " + url);
    const auto path_begin = url.find('/', scheme_end + 3);
    scheme_host_port_ = url.substr(0, path_begin);
    path_ = path_begin == std::string::npos ? "/" : url.substr(path_begin);
}

std::string HttpChatTransport::request_body(const ChatRequest& request) {
    nlohmann::json body = {
        {"model", request.model_id},
        {"messages",
         nlohmann::json::array({
             {{"role", "system"}, {"content", request.system_message}},
             {{"role", "user"}, {"content", request.user_message}},
         })},
        {"temperature", request.temperature},
    };
    return body.dump();
}

std::string HttpChatTransport::response_content(const std::string& body) {
    nlohmann::json doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw TransportError("chat response is not valid JSON", body);
    try {
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw TransportError("chat response lacks choices[0].message.content", body);
    }
}

std::string HttpChatTransport::complete(const ChatRequest& request) {
    httplib::Client client(scheme_host_port_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    auto res = client.Post(path_, headers, request_body(request), "application/json");
    if (!res) {
        throw TransportError("request to " + config_.endpoint_url + " failed: " +
                                 httplib::to_string(res.error()),
                             {}, 0, true);
    }
    const int status = res->status;
    if (status == 401 || status == 403) {
        throw TransportError("LLM endpoint rejected credentials (HTTP " + std::to_string(status) + ")",
                             res->body, status, false);
    }
    if (status == 429 || status >= 500) {
        throw TransportError("LLM endpoint returned HTTP " + std::to_string(status), res->body, status,
                             true);
    }
    if (status < 200 || status >= 300) {
        throw TransportError("LLM endpoint returned HTTP " + std::to_string(status), res->body, status,
                             false);
    }
    return response_content(res->body);
}

}  // namespace zsar
