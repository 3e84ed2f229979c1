#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "stemlab/error.hpp"
#include "stemlab/llm.hpp"

using namespace stemlab;
using nlohmann::json;

namespace {

// Local chat-completions stand-in. Behaviour is picked by the bearer token.
class FakeEndpoint {
public:
    FakeEndpoint() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            hits.fetch_add(1);
            last_body = req.body;
            const auto auth = req.get_header_value("Authorization");
            if (auth == "Bearer bad") {
                res.status = 401;
                return;
            }
            if (auth == "Bearer flaky" && hits.load() <= 2) {
                res.status = 500;
                return;
            }
            if (auth == "Bearer garbage") {
                res.set_content("{\"nope\": true}", "application/json");
                return;
            }
            if (auth == "Bearer teapot") {
                res.status = 418;
                return;
            }
            const auto body = json::parse(req.body);
            const std::string prompt = body["messages"].back()["content"];
            json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "echo:" + prompt}}}}}}};
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeEndpoint() {
        server_.stop();
        thread_.join();
    }

    ProviderConfig config(const std::string& env_name) const {
        ProviderConfig c;
        c.endpoint_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
        c.model_name = "test-model";
        c.api_key_env = env_name;
        c.backoff_base = std::chrono::milliseconds(1);
        c.request_timeout = std::chrono::milliseconds(5000);
        return c;
    }

    std::atomic<int> hits{0};
    std::string last_body;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

ChatRequest plain(const std::string& text) {
    ChatRequest r;
    r.user_text = text;
    return r;
}

}  // namespace

TEST(HttpProvider, SuccessfulCompletionAndBody) {
    FakeEndpoint ep;
    ::setenv("STEMLAB_TEST_KEY_OK", "good", 1);
    LlmGateway gw(ep.config("STEMLAB_TEST_KEY_OK"), std::make_unique<HttpProvider>(ep.config("STEMLAB_TEST_KEY_OK")));
    EXPECT_TRUE(gw.contacts_network());
    EXPECT_EQ(gw.complete(plain("hello")), "echo:hello");
    const auto body = json::parse(ep.last_body);
    EXPECT_EQ(body["model"], "test-model");
    EXPECT_EQ(body["temperature"], 0.0);
    EXPECT_EQ(body["top_p"], 1.0);
    EXPECT_EQ(body["max_tokens"], 512);
}

TEST(HttpProvider, InvalidKeyIsAuthError) {
    FakeEndpoint ep;
    ::setenv("STEMLAB_TEST_KEY_BAD", "bad", 1);
    const auto cfg = ep.config("STEMLAB_TEST_KEY_BAD");
    LlmGateway gw(cfg, std::make_unique<HttpProvider>(cfg));
    EXPECT_THROW(gw.complete(plain("x")), AuthError);
    EXPECT_EQ(ep.hits.load(), 1);
}

TEST(HttpProvider, MissingKeyVariableIsAuthError) {
    FakeEndpoint ep;
    ::unsetenv("STEMLAB_TEST_KEY_UNSET");
    const auto cfg = ep.config("STEMLAB_TEST_KEY_UNSET");
    LlmGateway gw(cfg, std::make_unique<HttpProvider>(cfg));
    EXPECT_THROW(gw.complete(plain("x")), AuthError);
    EXPECT_EQ(ep.hits.load(), 0);
}

TEST(HttpProvider, ServerErrorsAreRetried) {
    FakeEndpoint ep;
    ::setenv("STEMLAB_TEST_KEY_FLAKY", "flaky", 1);
    const auto cfg = ep.config("STEMLAB_TEST_KEY_FLAKY");
    LlmGateway gw(cfg, std::make_unique<HttpProvider>(cfg));
    EXPECT_EQ(gw.complete(plain("q")), "echo:q");
    EXPECT_EQ(ep.hits.load(), 3);
    EXPECT_EQ(gw.stats().retries, 2u);
}

TEST(HttpProvider, MalformedBodyNotRetried) {
    FakeEndpoint ep;
    ::setenv("STEMLAB_TEST_KEY_GARBAGE", "garbage", 1);
    const auto cfg = ep.config("STEMLAB_TEST_KEY_GARBAGE");
    LlmGateway gw(cfg, std::make_unique<HttpProvider>(cfg));
    EXPECT_THROW(gw.complete(plain("q")), MalformedResponseError);
    EXPECT_EQ(ep.hits.load(), 1);
}

TEST(HttpProvider, ClientErrorIsPermanent) {
    FakeEndpoint ep;
    ::setenv("STEMLAB_TEST_KEY_TEAPOT", "teapot", 1);
    const auto cfg = ep.config("STEMLAB_TEST_KEY_TEAPOT");
    LlmGateway gw(cfg, std::make_unique<HttpProvider>(cfg));
    EXPECT_THROW(gw.complete(plain("q")), TransportError);
    EXPECT_EQ(ep.hits.load(), 1);
}

TEST(HttpProvider, UnreachableEndpointIsTransportError) {
    ProviderConfig cfg;
    cfg.endpoint_url = "http://127.0.0.1:1/v1/chat/completions";
    cfg.api_key_env = "";
    cfg.max_retries = 1;
    cfg.backoff_base = std::chrono::milliseconds(1);
    cfg.request_timeout = std::chrono::milliseconds(500);
    LlmGateway gw(cfg, std::make_unique<HttpProvider>(cfg));
    EXPECT_THROW(gw.complete(plain("q")), TransportError);
    EXPECT_EQ(gw.stats().requests, 2u);
}

TEST(HttpProvider, ParseResponseShapes) {
    EXPECT_EQ(HttpProvider::parse_response(R"({"choices":[{"message":{"content":"hi"}}]})", "r"), "hi");
    EXPECT_THROW(HttpProvider::parse_response("not json", "r"), MalformedResponseError);
    EXPECT_THROW(HttpProvider::parse_response(R"({"choices":[]})", "r"), MalformedResponseError);
}

TEST(HttpProvider, RejectsBadUrl) {
    ProviderConfig cfg;
    cfg.endpoint_url = "ftp://example";
    EXPECT_THROW(HttpProvider{cfg}, InvalidArgument);
}
