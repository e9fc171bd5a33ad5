#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "memcollab/errors.hpp"

namespace memcollab {

enum class Role { system, user, assistant };
enum class FinishReason { stop, length, error };

std::string to_string(Role r);
std::string to_string(FinishReason f);

struct ChatMessage {
    Role role = Role::user;
    std::string content;
};

// Unset sampling fields fall back to the backend profile's defaults.
struct ChatRequest {
    std::vector<ChatMessage> messages;
    std::optional<double> temperature;
    std::optional<double> top_p;
    std::optional<int> max_tokens;
    std::optional<long> seed;
};

struct TokenUsage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct ChatResponse {
    std::string content;
    FinishReason finish = FinishReason::stop;
    std::optional<TokenUsage> usage;
};

// Per-profile generation defaults. The shipped values mirror the pinned
// experiment settings: greedy temperature, top-p 0.8, seed 42.
struct GenerationDefaults {
    double temperature = 0.0;
    double top_p = 0.8;
    int max_tokens = 2048;
    long seed = 42;
};

// Throws InvariantViolation unless messages are nonempty and the last one is
// a user message.
void validate_request(const ChatRequest& request);

// Stable byte serialization of the outbound payload: same request + profile
// always yields identical bytes. Used verbatim as the live HTTP body and as
// the mock backend's audit record.
std::string serialize_request(const ChatRequest& request, const std::string& model,
                              const GenerationDefaults& defaults);

// One conversation's worth of backend state (`once` bookkeeping for mocks).
class ChatSession {
  public:
    virtual ~ChatSession() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
};

// Shareable handle to a configured model backend. Sessions may be opened and
// driven from many workers concurrently.
class Backend {
  public:
    explicit Backend(std::string id) : id_(std::move(id)) {}
    virtual ~Backend() = default;

    virtual std::unique_ptr<ChatSession> open_session() = 0;

    // One-shot completion in a fresh session.
    ChatResponse complete(const ChatRequest& request) { return open_session()->complete(request); }

    const std::string& id() const { return id_; }

  private:
    std::string id_;
};

// ---------------------------------------------------------------------------
// Deterministic scripted mock
// ---------------------------------------------------------------------------

// Rules are evaluated in file order against the last user message; the first
// match wins. `once` rules fire at most one time per session and then fall
// through to later rules. `pattern` switches the rule from substring matching
// to an anchored regex over the whole message.
struct MockRule {
    std::string match;
    std::string response;
    bool once = false;
    bool pattern = false;
};

class MockBackend : public Backend {
  public:
    MockBackend(std::string id, std::vector<MockRule> rules);
    static std::shared_ptr<MockBackend> from_file(std::string id, const std::filesystem::path& path);

    std::unique_ptr<ChatSession> open_session() override;

    // Serialized payload of every request seen, in arrival order.
    std::vector<std::string> request_log() const;
    void clear_request_log();

    void record(const std::string& serialized);  // used by sessions

  private:
    std::shared_ptr<const std::vector<MockRule>> rules_;
    mutable std::mutex mutex_;
    std::vector<std::string> log_;
};

// ---------------------------------------------------------------------------
// Live chat-completion backend (generic JSON-over-HTTP POST)
// ---------------------------------------------------------------------------

struct HttpProfile {
    std::string url;    // e.g. http://host:8000/v1/chat/completions
    std::string model;  // model name sent in the payload
    std::string token;  // bearer credential, may be empty
    GenerationDefaults defaults;
    int max_retries = 2;  // transport errors only
    double timeout_seconds = 120.0;
};

class HttpBackend : public Backend {
  public:
    HttpBackend(std::string id, HttpProfile profile);
    std::unique_ptr<ChatSession> open_session() override;
    const HttpProfile& profile() const { return profile_; }

  private:
    HttpProfile profile_;
};

// Parses a chat-completion response body (choices[0].message.content).
// Exposed for tests; throws MalformedResponse.
ChatResponse parse_completion_body(const std::string& body);

// ---------------------------------------------------------------------------
// Registry: backend id -> handle, built from a JSON config file.
// ---------------------------------------------------------------------------

class BackendRegistry {
  public:
    void add(std::shared_ptr<Backend> backend);
    std::shared_ptr<Backend> get(const std::string& id) const;  // throws Error if absent
    bool has(const std::string& id) const;

    // Config format: {"backends": [{"id","kind":"mock","script":...} |
    //                              {"id","kind":"http","url","model",...}]}
    // Credentials come from the environment variable named by "token_env".
    // `seed_override`, when set, replaces the seed default of http profiles.
    static BackendRegistry from_config_file(const std::filesystem::path& path,
                                            std::optional<long> seed_override = std::nullopt);

  private:
    std::map<std::string, std::shared_ptr<Backend>> backends_;
};

}  // namespace memcollab
