#include <doctest.h>

#include <thread>

#include "consjudge/gateway.hpp"
#include "consjudge/mock_llm.hpp"
#include "test_util.hpp"

using namespace consjudge;
using json = nlohmann::json;

namespace {

class FakeTransport final : public Transport {
public:
    using Handler = std::function<HttpResponse(const std::string&, const json&)>;
    explicit FakeTransport(Handler h) : handler_(std::move(h)) {}

    HttpResponse post(const std::string& url, const std::string& body, const HttpHeaders& headers) override {
        std::lock_guard lock(mu_);
        ++calls;
        last_url = url;
        last_headers = headers;
        return handler_(url, json::parse(body));
    }

    int calls = 0;
    std::string last_url;
    HttpHeaders last_headers;

private:
    Handler handler_;
    std::mutex mu_;
};

HttpResponse chat_ok(const std::string& content) {
    return {200, json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump()};
}

HttpResponse embed_ok(std::vector<double> v) { return {200, json{{"data", {{{"embedding", v}}}}}.dump()}; }

ModelEndpoint chat_ep() { return {"http://llm.test/v1/", "chat-m", "", EndpointKind::kChat}; }
ModelEndpoint embed_ep() { return {"http://llm.test/v1", "emb-m", "", EndpointKind::kEmbedding}; }

GatewayOptions no_sleep() {
    GatewayOptions o;
    o.sleep = [](std::chrono::milliseconds) {};
    return o;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::kIo;
}

}  // namespace

TEST_CASE("endpoint validation") {
    CHECK_NOTHROW(validate_endpoint(chat_ep()));
    CHECK(code_of([] { validate_endpoint({"llm.test/v1", "m", "", EndpointKind::kChat}); }) == ErrorCode::kConfig);
    CHECK(code_of([] { validate_endpoint({"ftp://llm.test", "m", "", EndpointKind::kChat}); }) == ErrorCode::kConfig);
    CHECK(code_of([] { validate_endpoint({"http://llm.test", " ", "", EndpointKind::kChat}); }) == ErrorCode::kConfig);
}

TEST_CASE("cache key covers every request parameter") {
    const auto e = chat_ep();
    GenerationParams p{0.5, 100, 7};
    const auto k = cache_key(e, "hi", p, 0);
    CHECK(k.size() == 64);
    CHECK(k == cache_key(e, "hi", p, 0));
    CHECK(k != cache_key(e, "hi!", p, 0));
    CHECK(k != cache_key(e, "hi", p, 1));
    CHECK(k != cache_key(e, "hi", {0.6, 100, 7}, 0));
    CHECK(k != cache_key(e, "hi", {0.5, 101, 7}, 0));
    CHECK(k != cache_key(e, "hi", {0.5, 100, 8}, 0));
    auto other = e;
    other.model_id = "other";
    CHECK(k != cache_key(other, "hi", p, 0));
    CHECK(k != cache_key(embed_ep(), "hi", p, 0));
}

TEST_CASE("chat completion request shape and memory cache") {
    auto t = std::make_shared<FakeTransport>([](const std::string&, const json& body) {
        CHECK(body["model"] == "chat-m");
        CHECK(body["messages"][0]["content"] == "hello");
        CHECK(body["seed"] == 12);  // seed + ordinal
        return chat_ok("world");
    });
    ModelGateway g(t, no_sleep());
    GenerationParams p{0.7, 64, 10};
    CHECK(g.chat_complete(chat_ep(), "hello", p, 2) == "world");
    CHECK(t->last_url == "http://llm.test/v1/chat/completions");
    CHECK(g.chat_complete(chat_ep(), "hello", p, 2) == "world");
    CHECK(t->calls == 1);
    CHECK(g.stats().cache_hits == 1);
    CHECK(g.stats().hit_rate() == doctest::Approx(0.5));
}

TEST_CASE("disk cache survives a new gateway; no-cache skips lookups") {
    testutil::TempDir dir;
    auto t = std::make_shared<FakeTransport>([](const std::string&, const json&) { return chat_ok("cached"); });
    auto opts = no_sleep();
    opts.cache_dir = dir.path();
    {
        ModelGateway g(t, opts);
        g.chat_complete(chat_ep(), "p", {});
    }
    ModelGateway g2(t, opts);
    CHECK(g2.chat_complete(chat_ep(), "p", {}) == "cached");
    CHECK(t->calls == 1);
    CHECK(g2.stats().requests == 0);

    opts.read_cache = false;
    ModelGateway g3(t, opts);
    g3.chat_complete(chat_ep(), "p", {});
    g3.chat_complete(chat_ep(), "p", {});
    CHECK(t->calls == 3);
}

TEST_CASE("retries on 429 and 5xx, not on 4xx") {
    int n = 0;
    auto flaky = std::make_shared<FakeTransport>([&](const std::string&, const json&) {
        return ++n < 3 ? HttpResponse{503, "busy"} : chat_ok("ok");
    });
    std::vector<std::chrono::milliseconds> sleeps;
    auto opts = no_sleep();
    opts.sleep = [&](std::chrono::milliseconds d) { sleeps.push_back(d); };
    opts.backoff_base = std::chrono::milliseconds(10);
    ModelGateway g(flaky, opts);
    CHECK(g.chat_complete(chat_ep(), "x", {}) == "ok");
    CHECK(flaky->calls == 3);
    REQUIRE(sleeps.size() == 2);
    CHECK(sleeps[1] >= std::chrono::milliseconds(20));

    auto limited = std::make_shared<FakeTransport>([](const std::string&, const json&) { return HttpResponse{429, ""}; });
    ModelGateway g2(limited, no_sleep());
    try {
        g2.chat_complete(chat_ep(), "x", {});
        FAIL("expected rate limit error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kRateLimited);
        CHECK(std::string(e.what()).find("5 attempts") != std::string::npos);
    }
    CHECK(limited->calls == 5);

    auto bad = std::make_shared<FakeTransport>([](const std::string&, const json&) { return HttpResponse{400, "no"}; });
    ModelGateway g3(bad, no_sleep());
    CHECK(code_of([&] { g3.chat_complete(chat_ep(), "x", {}); }) == ErrorCode::kHttpStatus);
    CHECK(bad->calls == 1);

    auto down = std::make_shared<FakeTransport>([](const std::string&, const json&) -> HttpResponse {
        throw Error(ErrorCode::kTransport, "refused");
    });
    ModelGateway g4(down, no_sleep());
    CHECK(code_of([&] { g4.chat_complete(chat_ep(), "x", {}); }) == ErrorCode::kTransport);
    CHECK(down->calls == 5);
}

TEST_CASE("malformed and empty replies") {
    auto junk = std::make_shared<FakeTransport>([](const std::string&, const json&) { return HttpResponse{200, "{"}; });
    ModelGateway g(junk, no_sleep());
    CHECK(code_of([&] { g.chat_complete(chat_ep(), "x", {}); }) == ErrorCode::kMalformedResponse);
    auto empty = std::make_shared<FakeTransport>([](const std::string&, const json&) { return chat_ok(""); });
    ModelGateway g2(empty, no_sleep());
    CHECK(code_of([&] { g2.chat_complete(chat_ep(), "x", {}); }) == ErrorCode::kMalformedResponse);
}

TEST_CASE("parameter and kind checks") {
    auto t = std::make_shared<FakeTransport>([](const std::string&, const json&) { return chat_ok("x"); });
    ModelGateway g(t, no_sleep());
    CHECK(code_of([&] { g.chat_complete(embed_ep(), "x", {}); }) == ErrorCode::kPrecondition);
    CHECK(code_of([&] { g.embed(chat_ep(), "x"); }) == ErrorCode::kPrecondition);
    CHECK(code_of([&] { g.chat_complete(chat_ep(), "x", {2.5, 10, {}}); }) == ErrorCode::kRange);
    CHECK(code_of([&] { g.chat_complete(chat_ep(), "x", {0.0, 0, {}}); }) == ErrorCode::kRange);
    CHECK(t->calls == 0);
}

TEST_CASE("embeddings: zero vectors and dimension changes are errors") {
    auto t = std::make_shared<FakeTransport>([](const std::string&, const json& body) {
        const auto in = body["input"].get<std::string>();
        if (in == "zero") return embed_ok({0, 0, 0});
        if (in == "long") return embed_ok({1, 2, 3, 4});
        return embed_ok({1, 2, 3});
    });
    ModelGateway g(t, no_sleep());
    CHECK(g.embed(embed_ep(), "a").dim() == 3);
    CHECK(t->last_url == "http://llm.test/v1/embeddings");
    CHECK(code_of([&] { g.embed(embed_ep(), "zero"); }) == ErrorCode::kDegenerateEmbedding);
    CHECK(code_of([&] { g.embed(embed_ep(), "long"); }) == ErrorCode::kDimensionMismatch);
    CHECK(code_of([&] { g.embed(embed_ep(), ""); }) == ErrorCode::kPrecondition);
}

TEST_CASE("credentials come from the environment") {
    auto t = std::make_shared<FakeTransport>([](const std::string&, const json&) { return chat_ok("x"); });
    auto opts = no_sleep();
    opts.env = [](const std::string& name) -> std::optional<std::string> {
        if (name == "GOOD_KEY") return "s3cret";
        return std::nullopt;
    };
    ModelGateway g(t, opts);
    auto e = chat_ep();
    e.api_key_env = "MISSING_KEY";
    CHECK(code_of([&] { g.check_credentials(e); }) == ErrorCode::kConfig);
    CHECK(code_of([&] { g.chat_complete(e, "x", {}); }) == ErrorCode::kConfig);
    CHECK(t->calls == 0);
    e.api_key_env = "GOOD_KEY";
    g.chat_complete(e, "x", {});
    bool auth = false;
    for (const auto& [k, v] : t->last_headers) auth |= k == "Authorization" && v == "Bearer s3cret";
    CHECK(auth);
}

TEST_CASE("concurrent identical requests reach the network once") {
    auto t = std::make_shared<FakeTransport>([](const std::string&, const json&) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        return chat_ok("same");
    });
    ModelGateway g(t, no_sleep());
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { CHECK(g.chat_complete(chat_ep(), "p", {}) == "same"); });
    for (auto& th : threads) th.join();
    CHECK(t->calls == 1);
}

TEST_CASE("http transport against the loopback mock server") {
    auto llm = std::make_shared<MockLlm>(MockBehavior{});
    MockServer server(llm);
    ModelGateway g(std::make_shared<HttpTransport>(std::chrono::seconds(10)), no_sleep());
    ModelEndpoint chat{server.base_url(), "gen-x", "", EndpointKind::kChat};
    const auto text = g.chat_complete(chat, "Say something about rivers.", {0.5, 64, 1});
    CHECK_FALSE(text.empty());
    ModelEndpoint emb{server.base_url(), "emb-x", "", EndpointKind::kEmbedding};
    CHECK(g.embed(emb, "hello").dim() == 64);
    CHECK(llm->requests() == 2);

    ModelEndpoint nowhere{"http://127.0.0.1:1/v1", "m", "", EndpointKind::kChat};
    CHECK(code_of([&] { g.chat_complete(nowhere, "x", {}); }) == ErrorCode::kTransport);
}
