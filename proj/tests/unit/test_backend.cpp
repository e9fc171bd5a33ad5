#include "doctest.h"

#include <atomic>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "memcollab/backend.hpp"
#include "memcollab/util.hpp"
#include "testutil.hpp"

using namespace memcollab;

namespace {

ChatRequest user_request(const std::string& text) {
    ChatRequest request;
    request.messages.push_back({Role::user, text});
    return request;
}

}  // namespace

TEST_SUITE("backend") {

TEST_CASE("mock: single rule answers") {
    MockBackend mock("m", {{"2+2", "4", false, false}});
    ChatResponse response = mock.complete(user_request("what is 2+2"));
    CHECK(response.content == "4");
    CHECK(response.finish == FinishReason::stop);
}

TEST_CASE("mock: first matching rule wins") {
    MockBackend mock("m", {{"2+2", "first", false, false}, {"2+2", "second", false, false}});
    CHECK(mock.complete(user_request("2+2")).content == "first");
}

TEST_CASE("mock: once rules fall through within a session") {
    MockBackend mock("m", {{"go", "step one", true, false}, {"go", "step two", false, false}});
    auto session = mock.open_session();
    CHECK(session->complete(user_request("go")).content == "step one");
    CHECK(session->complete(user_request("go")).content == "step two");
    CHECK(session->complete(user_request("go")).content == "step two");

    // A fresh session starts over.
    auto session2 = mock.open_session();
    CHECK(session2->complete(user_request("go")).content == "step one");
}

TEST_CASE("mock: no rule matched lists the prompt tail") {
    MockBackend mock("m", {{"nope", "x", false, false}});
    try {
        mock.complete(user_request("a long prompt about circles"));
        FAIL("expected NoRuleMatched");
    } catch (const NoRuleMatched& e) {
        CHECK(std::string(e.what()).find("circles") != std::string::npos);
    }
}

TEST_CASE("mock: pattern rules are anchored") {
    MockBackend mock("m", {{".*answer [0-9]+.*", "matched", false, true}});
    CHECK(mock.complete(user_request("the answer 42 is here")).content == "matched");
    CHECK_THROWS_AS(mock.complete(user_request("no digits here")), NoRuleMatched);
}

TEST_CASE("mock: matching is against the last user message only") {
    MockBackend mock("m", {{"marker", "hit", false, false}, {"", "fallback", false, false}});
    ChatRequest request;
    request.messages.push_back({Role::system, "has marker in system"});
    request.messages.push_back({Role::user, "clean"});
    CHECK(mock.complete(request).content == "fallback");
}

TEST_CASE("mock determinism: 100 repeated calls return byte-identical content") {
    MockBackend mock("m", {{"x", "deterministic output", false, false}});
    const std::string first = mock.complete(user_request("x")).content;
    for (int i = 0; i < 99; ++i) {
        CHECK(mock.complete(user_request("x")).content == first);
    }
}

TEST_CASE("mock: rule file loads in order") {
    util::TempDir dir;
    auto path = dir.path() / "rules.jsonl";
    util::write_file(path,
                     R"({"match":"a","response":"one","once":true})"
                     "\n"
                     R"({"match":"a","response":"two"})"
                     "\n");
    auto mock = MockBackend::from_file("m", path);
    auto session = mock->open_session();
    CHECK(session->complete(user_request("a")).content == "one");
    CHECK(session->complete(user_request("a")).content == "two");

    util::write_file(path, "{\"match\":\"a\"}\n");
    CHECK_THROWS_AS(MockBackend::from_file("m", path), SchemaError);
}

TEST_CASE("request validation") {
    ChatRequest empty;
    CHECK_THROWS_AS(validate_request(empty), InvariantViolation);

    ChatRequest assistant_last;
    assistant_last.messages.push_back({Role::user, "hi"});
    assistant_last.messages.push_back({Role::assistant, "hello"});
    CHECK_THROWS_AS(validate_request(assistant_last), InvariantViolation);

    ChatRequest bad_temp = user_request("x");
    bad_temp.temperature = -1.0;
    CHECK_THROWS_AS(validate_request(bad_temp), InvariantViolation);

    ChatRequest bad_top_p = user_request("x");
    bad_top_p.top_p = 1.5;
    CHECK_THROWS_AS(validate_request(bad_top_p), InvariantViolation);
}

TEST_CASE("serialization is stable and carries the pinned defaults") {
    ChatRequest request = user_request("solve it");
    request.messages.insert(request.messages.begin(), {Role::system, "be brief"});

    GenerationDefaults defaults;  // temperature 0, top_p 0.8, seed 42
    const std::string a = serialize_request(request, "qwen", defaults);
    const std::string b = serialize_request(request, "qwen", defaults);
    CHECK(a == b);

    nlohmann::json payload = nlohmann::json::parse(a);
    CHECK(payload["model"] == "qwen");
    CHECK(payload["temperature"] == 0.0);
    CHECK(payload["top_p"] == 0.8);
    CHECK(payload["seed"] == 42);
    CHECK(payload["messages"][0]["role"] == "system");
    CHECK(payload["messages"][1]["content"] == "solve it");

    // Explicit request fields override the profile defaults.
    request.temperature = 0.7;
    request.seed = 7;
    nlohmann::json overridden = nlohmann::json::parse(serialize_request(request, "qwen", defaults));
    CHECK(overridden["temperature"] == 0.7);
    CHECK(overridden["seed"] == 7);
}

TEST_CASE("completion body parsing") {
    ChatResponse ok = parse_completion_body(
        R"({"choices":[{"message":{"content":"hi"},"finish_reason":"stop"}],)"
        R"("usage":{"prompt_tokens":3,"completion_tokens":1}})");
    CHECK(ok.content == "hi");
    CHECK(ok.finish == FinishReason::stop);
    REQUIRE(ok.usage.has_value());
    CHECK(ok.usage->prompt_tokens == 3);

    ChatResponse truncated = parse_completion_body(
        R"({"choices":[{"message":{"content":"partial"},"finish_reason":"length"}]})");
    CHECK(truncated.finish == FinishReason::length);

    CHECK_THROWS_AS(parse_completion_body("not json"), MalformedResponse);
    CHECK_THROWS_AS(parse_completion_body(R"({"choices":[]})"), MalformedResponse);
    CHECK_THROWS_AS(parse_completion_body(R"({"error":"boom"})"), MalformedResponse);
}

TEST_CASE("mock records every request payload") {
    MockBackend mock("m", {{"", "ok", false, false}});
    mock.complete(user_request("one"));
    mock.complete(user_request("two"));
    auto log = mock.request_log();
    REQUIRE(log.size() == 2);
    CHECK(nlohmann::json::parse(log[0])["messages"][0]["content"] == "one");
    CHECK(nlohmann::json::parse(log[1])["messages"][0]["content"] == "two");
    mock.clear_request_log();
    CHECK(mock.request_log().empty());
}

TEST_CASE("live backend against a loopback server: defaults, auth, retry, rate limit") {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::string last_body;
    std::string last_auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        int hit = ++hits;
        last_body = req.body;
        last_auth = req.get_header_value("Authorization");
        if (hit <= 2) {  // two transient failures, then success
            res.status = 500;
            return;
        }
        res.set_content(
            R"({"choices":[{"message":{"content":"pong"},"finish_reason":"stop"}]})",
            "application/json");
    });
    server.Post("/limited", [&](const httplib::Request&, httplib::Response& res) {
        res.status = 429;
        res.set_header("Retry-After", "3");
    });

    int port = server.bind_to_any_port("127.0.0.1");
    if (port <= 0) {
        MESSAGE("loopback bind unavailable in this environment; skipping live-backend test");
        return;
    }
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpProfile profile;
    profile.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    profile.model = "test-model";
    profile.token = "secret";
    HttpBackend backend("live", profile);

    ChatRequest request = user_request("ping");
    ChatResponse response = backend.complete(request);
    CHECK(response.content == "pong");
    CHECK(hits == 3);  // two retries on 500s
    CHECK(last_auth == "Bearer secret");

    // The body is exactly the stable serialization with profile defaults.
    CHECK(last_body == serialize_request(request, "test-model", profile.defaults));
    nlohmann::json payload = nlohmann::json::parse(last_body);
    CHECK(payload["temperature"] == 0.0);
    CHECK(payload["top_p"] == 0.8);
    CHECK(payload["seed"] == 42);

    HttpProfile limited = profile;
    limited.url = "http://127.0.0.1:" + std::to_string(port) + "/limited";
    HttpBackend limited_backend("limited", limited);
    try {
        limited_backend.complete(user_request("ping"));
        FAIL("expected RateLimited");
    } catch (const RateLimited& e) {
        REQUIRE(e.retry_after_seconds.has_value());
        CHECK(*e.retry_after_seconds == doctest::Approx(3.0));
    }

    server.stop();
    server_thread.join();
}

TEST_CASE("live backend: unreachable endpoint raises TransportError after retries") {
    HttpProfile profile;
    profile.url = "http://127.0.0.1:9/v1/chat/completions";  // discard port, nothing listens
    profile.model = "m";
    profile.max_retries = 1;
    profile.timeout_seconds = 2.0;
    HttpBackend backend("dead", profile);
    CHECK_THROWS_AS(backend.complete(user_request("ping")), TransportError);
}

TEST_CASE("registry: config file wiring") {
    util::TempDir dir;
    util::write_file(dir.path() / "rules.jsonl", R"({"match":"","response":"ok"})" "\n");
    util::write_file(dir.path() / "backends.json", R"({"backends":[
        {"id":"weak","kind":"mock","script":"rules.jsonl"},
        {"id":"live","kind":"http","url":"http://localhost:1/v1/chat/completions",
         "model":"m","top_p":0.9}
    ]})");

    BackendRegistry registry = BackendRegistry::from_config_file(dir.path() / "backends.json");
    CHECK(registry.has("weak"));
    CHECK(registry.get("weak")->complete(user_request("x")).content == "ok");
    CHECK_THROWS_AS(registry.get("missing"), Error);

    auto live = std::dynamic_pointer_cast<HttpBackend>(registry.get("live"));
    REQUIRE(live);
    CHECK(live->profile().defaults.top_p == 0.9);
    CHECK(live->profile().defaults.temperature == 0.0);
    CHECK(live->profile().defaults.seed == 42);

    BackendRegistry reseeded =
        BackendRegistry::from_config_file(dir.path() / "backends.json", 7L);
    auto reseeded_live = std::dynamic_pointer_cast<HttpBackend>(reseeded.get("live"));
    CHECK(reseeded_live->profile().defaults.seed == 7);
}

}  // TEST_SUITE
