#include "memcollab/backend.hpp"

#include <chrono>
#include <cstdlib>
#include <regex>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "memcollab/util.hpp"

namespace memcollab {

std::string to_string(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

std::string to_string(FinishReason f) {
    switch (f) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::error: return "error";
    }
    return "error";
}

void validate_request(const ChatRequest& request) {
    if (request.messages.empty()) throw InvariantViolation("chat request has no messages");
    if (request.messages.back().role != Role::user)
        throw InvariantViolation("last chat message must be a user message");
    if (request.temperature && *request.temperature < 0.0)
        throw InvariantViolation("temperature must be >= 0");
    if (request.top_p && (*request.top_p <= 0.0 || *request.top_p > 1.0))
        throw InvariantViolation("top_p must be in (0,1]");
    if (request.max_tokens && *request.max_tokens <= 0)
        throw InvariantViolation("max_tokens must be positive");
}

std::string serialize_request(const ChatRequest& request, const std::string& model,
                              const GenerationDefaults& defaults) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& message : request.messages) {
        messages.push_back({{"role", to_string(message.role)}, {"content", message.content}});
    }
    // nlohmann objects serialize with sorted keys, so equal payloads are
    // byte-identical.
    nlohmann::json body = {
        {"model", model},
        {"messages", messages},
        {"temperature", request.temperature.value_or(defaults.temperature)},
        {"top_p", request.top_p.value_or(defaults.top_p)},
        {"max_tokens", request.max_tokens.value_or(defaults.max_tokens)},
        {"seed", request.seed.value_or(defaults.seed)},
    };
    return body.dump();
}

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

namespace {

class MockSession : public ChatSession {
  public:
    MockSession(MockBackend* owner, std::shared_ptr<const std::vector<MockRule>> rules)
        : owner_(owner), rules_(std::move(rules)), fired_(rules_->size(), false) {}

    ChatResponse complete(const ChatRequest& request) override {
        validate_request(request);
        owner_->record(serialize_request(request, "mock", GenerationDefaults{}));

        const std::string& message = request.messages.back().content;
        std::lock_guard lock(mutex_);
        for (std::size_t i = 0; i < rules_->size(); ++i) {
            const MockRule& rule = (*rules_)[i];
            if (rule.once && fired_[i]) continue;
            if (!matches(rule, message)) continue;
            if (rule.once) fired_[i] = true;
            return ChatResponse{rule.response, FinishReason::stop, std::nullopt};
        }
        throw NoRuleMatched("no mock rule matched; message tail: \"" + tail(message) + "\"");
    }

  private:
    static bool matches(const MockRule& rule, const std::string& message) {
        if (rule.pattern) {
            std::regex re(rule.match);
            return std::regex_match(message, re);
        }
        return message.find(rule.match) != std::string::npos;
    }

    static std::string tail(const std::string& message) {
        constexpr std::size_t kTail = 160;
        if (message.size() <= kTail) return message;
        return "..." + message.substr(message.size() - kTail);
    }

    MockBackend* owner_;
    std::shared_ptr<const std::vector<MockRule>> rules_;
    std::vector<bool> fired_;
    std::mutex mutex_;
};

}  // namespace

MockBackend::MockBackend(std::string id, std::vector<MockRule> rules)
    : Backend(std::move(id)),
      rules_(std::make_shared<const std::vector<MockRule>>(std::move(rules))) {}

std::shared_ptr<MockBackend> MockBackend::from_file(std::string id,
                                                    const std::filesystem::path& path) {
    std::vector<MockRule> rules;
    for (const auto& [line, record] : util::read_jsonl(path)) {
        if (!record.contains("match") || !record.contains("response"))
            throw SchemaError(line, "mock rule needs \"match\" and \"response\"");
        MockRule rule;
        rule.match = record["match"].get<std::string>();
        rule.response = record["response"].get<std::string>();
        rule.once = record.value("once", false);
        rule.pattern = record.value("pattern", false);
        rules.push_back(std::move(rule));
    }
    return std::make_shared<MockBackend>(std::move(id), std::move(rules));
}

std::unique_ptr<ChatSession> MockBackend::open_session() {
    return std::make_unique<MockSession>(this, rules_);
}

void MockBackend::record(const std::string& serialized) {
    std::lock_guard lock(mutex_);
    log_.push_back(serialized);
}

std::vector<std::string> MockBackend::request_log() const {
    std::lock_guard lock(mutex_);
    return log_;
}

void MockBackend::clear_request_log() {
    std::lock_guard lock(mutex_);
    log_.clear();
}

// ---------------------------------------------------------------------------
// Live backend
// ---------------------------------------------------------------------------

ChatResponse parse_completion_body(const std::string& body) {
    nlohmann::json parsed = nlohmann::json::parse(body, nullptr, false);
    if (parsed.is_discarded()) throw MalformedResponse("response body is not JSON");
    if (!parsed.contains("choices") || !parsed["choices"].is_array() || parsed["choices"].empty())
        throw MalformedResponse("response carries no choices");
    const auto& choice = parsed["choices"][0];
    if (!choice.contains("message") || !choice["message"].contains("content") ||
        !choice["message"]["content"].is_string())
        throw MalformedResponse("response choice carries no message content");

    ChatResponse response;
    response.content = choice["message"]["content"].get<std::string>();
    std::string finish = choice.value("finish_reason", "stop");
    response.finish = finish == "length" ? FinishReason::length : FinishReason::stop;
    if (parsed.contains("usage") && parsed["usage"].is_object()) {
        TokenUsage usage;
        usage.prompt_tokens = parsed["usage"].value("prompt_tokens", 0);
        usage.completion_tokens = parsed["usage"].value("completion_tokens", 0);
        response.usage = usage;
    }
    if (response.finish == FinishReason::stop && response.content.empty())
        throw MalformedResponse("finish=stop with empty content");
    return response;
}

namespace {

struct ParsedUrl {
    std::string host_port;  // scheme://host[:port]
    std::string path;
};

ParsedUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error("backend url needs a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

class HttpSession : public ChatSession {
  public:
    explicit HttpSession(HttpProfile profile) : profile_(std::move(profile)) {}

    ChatResponse complete(const ChatRequest& request) override {
        validate_request(request);
        const std::string body = serialize_request(request, profile_.model, profile_.defaults);
        const ParsedUrl url = split_url(profile_.url);

        httplib::Headers headers = {{"Content-Type", "application/json"}};
        if (!profile_.token.empty()) headers.emplace("Authorization", "Bearer " + profile_.token);

        std::string last_error;
        for (int attempt = 0; attempt <= profile_.max_retries; ++attempt) {
            if (attempt > 0) {
                auto backoff = std::chrono::milliseconds(250L << (attempt - 1));
                std::this_thread::sleep_for(backoff);
            }
            httplib::Client client(url.host_port);
            client.set_read_timeout(static_cast<time_t>(profile_.timeout_seconds), 0);
            client.set_connection_timeout(static_cast<time_t>(profile_.timeout_seconds), 0);

            auto result = client.Post(url.path, headers, body, "application/json");
            if (!result) {
                last_error = "transport failure: " + httplib::to_string(result.error());
                continue;
            }
            if (result->status == 429) {
                std::optional<double> retry_after;
                if (result->has_header("Retry-After"))
                    retry_after = std::strtod(result->get_header_value("Retry-After").c_str(), nullptr);
                throw RateLimited("backend rate limited (429)", retry_after);
            }
            if (result->status >= 500) {
                last_error = "server error " + std::to_string(result->status);
                continue;
            }
            if (result->status != 200)
                throw BackendError("backend returned status " + std::to_string(result->status) +
                                   ": " + result->body);
            return parse_completion_body(result->body);
        }
        throw TransportError(last_error.empty() ? "transport failure" : last_error);
    }

  private:
    HttpProfile profile_;
};

}  // namespace

HttpBackend::HttpBackend(std::string id, HttpProfile profile)
    : Backend(std::move(id)), profile_(std::move(profile)) {}

std::unique_ptr<ChatSession> HttpBackend::open_session() {
    return std::make_unique<HttpSession>(profile_);
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

void BackendRegistry::add(std::shared_ptr<Backend> backend) {
    backends_[backend->id()] = std::move(backend);
}

std::shared_ptr<Backend> BackendRegistry::get(const std::string& id) const {
    auto it = backends_.find(id);
    if (it == backends_.end()) throw Error("no backend configured with id \"" + id + "\"");
    return it->second;
}

bool BackendRegistry::has(const std::string& id) const { return backends_.count(id) > 0; }

BackendRegistry BackendRegistry::from_config_file(const std::filesystem::path& path,
                                                  std::optional<long> seed_override) {
    nlohmann::json config = nlohmann::json::parse(util::read_file(path), nullptr, false);
    if (config.is_discarded() || !config.contains("backends") || !config["backends"].is_array())
        throw SchemaError(1, "backend config needs a \"backends\" array");

    BackendRegistry registry;
    for (const auto& record : config["backends"]) {
        std::string id = record.value("id", "");
        std::string kind = record.value("kind", "");
        if (id.empty()) throw SchemaError(1, "backend profile needs an \"id\"");

        if (kind == "mock") {
            std::filesystem::path script = record.value("script", "");
            if (script.is_relative()) script = path.parent_path() / script;
            registry.add(MockBackend::from_file(id, script));
        } else if (kind == "http") {
            HttpProfile profile;
            profile.url = record.value("url", "");
            profile.model = record.value("model", "");
            if (profile.url.empty()) throw SchemaError(1, "http backend needs a \"url\"");
            if (record.contains("temperature")) profile.defaults.temperature = record["temperature"].get<double>();
            if (record.contains("top_p")) profile.defaults.top_p = record["top_p"].get<double>();
            if (record.contains("max_tokens")) profile.defaults.max_tokens = record["max_tokens"].get<int>();
            if (record.contains("seed")) profile.defaults.seed = record["seed"].get<long>();
            if (seed_override) profile.defaults.seed = *seed_override;
            if (record.contains("max_retries")) profile.max_retries = record["max_retries"].get<int>();
            if (record.contains("token_env")) {
                if (const char* token = std::getenv(record["token_env"].get<std::string>().c_str()))
                    profile.token = token;
            }
            registry.add(std::make_shared<HttpBackend>(id, std::move(profile)));
        } else {
            throw SchemaError(1, "unknown backend kind \"" + kind + "\" for id " + id);
        }
    }
    return registry;
}

}  // namespace memcollab
