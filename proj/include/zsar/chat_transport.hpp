#pragma once

#include <chrono>
#include <string>

namespace zsar {

struct LlmConfig {
    std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
    std::string model_id = "gpt-3.5-turbo";
    double temperature = 0.0;
    int max_retries = 3;
    std::chrono::milliseconds timeout{60'000};
    /// Empty means the endpoint needs no key (e.g. a local server).
    std::string api_key_env_var = "OPENAI_API_KEY";

    /// Throws ConfigError when max_retries < 1 or temperature < 0.
    void validate() const;
};

struct ChatRequest {
    std::string model_id;
    std::string system_message;
    std::string user_message;
    double temperature = 0.0;
};

/// One chat-completion round trip. Implementations return the assistant
/// message text and throw TransportError on network, HTTP or protocol
/// failures. Must be safe to call from several threads at once.
class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    virtual std::string complete(const ChatRequest& request) = 0;
};

/// OpenAI-compatible `POST .../chat/completions` over HTTP(S).
class HttpChatTransport final : public ChatTransport {
public:
    /// Resolves the API key from the environment; throws EnvironmentError if
    /// `api_key_env_var` is set but the variable is missing or empty.
    explicit HttpChatTransport(LlmConfig config);

    std::string complete(const ChatRequest& request) override;

    /// Request body for `request`, as sent on the wire.
    static std::string request_body(const ChatRequest& request);

    /// Extracts choices[0].message.content; throws TransportError otherwise.
    static std::string response_content(const std::string& body);

private:
    LlmConfig config_;
    std::string api_key_;
    std::string scheme_host_port_;
    std::string path_;
};

}  // namespace zsar
