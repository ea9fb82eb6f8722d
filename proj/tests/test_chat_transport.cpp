#include "zsar/chat_transport.hpp"
#include "zsar/errors.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <thread>

using namespace zsar;
using nlohmann::json;

namespace {

class LocalServer {
public:
    explicit LocalServer(httplib::Server::Handler handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

LlmConfig local_config(const std::string& url) {
    LlmConfig cfg;
    cfg.endpoint_url = url;
    cfg.api_key_env_var = "ZSAR_TEST_CHAT_KEY";
    cfg.timeout = std::chrono::milliseconds(5000);
    return cfg;
}

std::string reply(const std::string& content) {
    return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump();
}

}  // namespace

TEST(HttpChatTransport, SendsOpenAiCompatibleRequest) {
    ::setenv("ZSAR_TEST_CHAT_KEY", "sk-test", 1);
    json seen;
    std::string auth;
    LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        res.set_content(reply("['a', 'b', 'c']"), "application/json");
    });
    HttpChatTransport transport(local_config(server.url()));
    const auto out = transport.complete({"gpt-3.5-turbo", "SYSTEM", "snowboarding", 0.0});
    EXPECT_EQ(out, "['a', 'b', 'c']");
    EXPECT_EQ(auth, "Bearer sk-test");
    EXPECT_EQ(seen["model"], "gpt-3.5-turbo");
    EXPECT_EQ(seen["temperature"], 0.0);
    ASSERT_EQ(seen["messages"].size(), 2u);
    EXPECT_EQ(seen["messages"][0]["role"], "system");
    EXPECT_EQ(seen["messages"][0]["content"], "SYSTEM");
    EXPECT_EQ(seen["messages"][1]["role"], "user");
    EXPECT_EQ(seen["messages"][1]["content"], "snowboarding");
}

TEST(HttpChatTransport, RateLimitIsRetryable) {
    ::setenv("ZSAR_TEST_CHAT_KEY", "sk-test", 1);
    LocalServer server([](const httplib::Request&, httplib::Response& res) {
        res.status = 429;
        res.set_content("slow down", "text/plain");
    });
    HttpChatTransport transport(local_config(server.url()));
    try {
        transport.complete({"m", "s", "u", 0.0});
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_EQ(e.status(), 429);
        EXPECT_TRUE(e.retryable());
        EXPECT_EQ(e.raw_response(), "slow down");
    }
}

TEST(HttpChatTransport, AuthFailureIsNotRetryable) {
    ::setenv("ZSAR_TEST_CHAT_KEY", "sk-bad", 1);
    LocalServer server([](const httplib::Request&, httplib::Response& res) { res.status = 401; });
    HttpChatTransport transport(local_config(server.url()));
    try {
        transport.complete({"m", "s", "u", 0.0});
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_EQ(e.status(), 401);
        EXPECT_FALSE(e.retryable());
    }
}

TEST(HttpChatTransport, MalformedBodyIsTransportError) {
    ::setenv("ZSAR_TEST_CHAT_KEY", "sk-test", 1);
    LocalServer server([](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"choices\": []}", "application/json");
    });
    HttpChatTransport transport(local_config(server.url()));
    EXPECT_THROW(transport.complete({"m", "s", "u", 0.0}), TransportError);
}

TEST(HttpChatTransport, ConnectionRefusedIsRetryable) {
    ::setenv("ZSAR_TEST_CHAT_KEY", "sk-test", 1);
    std::string url;
    {
        LocalServer server([](const httplib::Request&, httplib::Response&) {});
        url = server.url();
    }
    HttpChatTransport transport(local_config(url));
    try {
        transport.complete({"m", "s", "u", 0.0});
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_TRUE(e.retryable());
    }
}

TEST(HttpChatTransport, MissingKeyIsEnvironmentError) {
    ::unsetenv("ZSAR_TEST_CHAT_KEY_MISSING");
    LlmConfig cfg = local_config("http://127.0.0.1:1/v1/chat/completions");
    cfg.api_key_env_var = "ZSAR_TEST_CHAT_KEY_MISSING";
    EXPECT_THROW(HttpChatTransport{cfg}, EnvironmentError);
}

TEST(HttpChatTransport, NoKeyNeededWhenVariableUnset) {
    std::string auth = "unset";
    LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        res.set_content(reply("ok"), "application/json");
    });
    LlmConfig cfg = local_config(server.url());
    cfg.api_key_env_var.clear();
    HttpChatTransport transport(cfg);
    EXPECT_EQ(transport.complete({"m", "s", "u", 0.0}), "ok");
    EXPECT_EQ(auth, "");
}

TEST(LlmConfig, Validation) {
    LlmConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.max_retries = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.max_retries = 2;
    cfg.temperature = -0.1;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(HttpChatTransport, ResponseContentExtraction) {
    EXPECT_EQ(HttpChatTransport::response_content(reply("x")), "x");
    EXPECT_THROW(HttpChatTransport::response_content("not json"), TransportError);
}
