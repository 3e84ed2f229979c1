#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stemlab/error.hpp"

namespace stemlab {

// ---------------------------------------------------------------------------
// Requests and provider configuration

struct DecodeParams {
    double temperature = 0.0;
    double top_p = 1.0;
};

/// Remote chat services accept temperature 0. Local open-model servers get a
/// near-zero temperature with nucleus sampling at 0.9.
enum class DecodeProfile { Remote, Local };

DecodeParams default_decode(DecodeProfile profile);
std::string_view to_string(DecodeProfile profile);
DecodeProfile parse_decode_profile(std::string_view name);

struct ChatRequest {
    std::optional<std::string> system_text;
    std::string user_text;
    double temperature = 0.0;
    double top_p = 1.0;
    int max_output_tokens = 512;

    /// Throws InvalidArgument on empty user_text or out-of-range decode values.
    void validate() const;
};

struct ProviderConfig {
    std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
    std::string model_name = "gpt-3.5-turbo-0613";
    /// Name of the environment variable holding the bearer token. Empty means
    /// the endpoint takes no authentication.
    std::string api_key_env = "OPENAI_API_KEY";
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{500};
    int max_concurrent_requests = 4;
    std::chrono::milliseconds request_timeout{120000};
    DecodeProfile profile = DecodeProfile::Remote;

    void validate() const;
};

/// Transient transport failures are retried by the gateway. Permanent ones
/// (4xx other than 408/429) are not.
class TransportFailure : public TransportError {
public:
    TransportFailure(std::string request_id, const std::string& what, bool transient)
        : TransportError(std::move(request_id), what), transient_(transient) {}

    bool transient() const noexcept { return transient_; }

private:
    bool transient_;
};

/// Hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Identifier attached to provider errors and logs: prefix of the prompt hash.
std::string request_id_for(const ChatRequest& req);

// ---------------------------------------------------------------------------
// Providers

/// One attempt per call; retry policy lives in LlmGateway.
class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual std::string complete_once(const ChatRequest& req, const std::string& request_id) = 0;
    virtual bool contacts_network() const = 0;
};

/// Offline provider. Canned responses keyed by SHA-256 of user_text take
/// precedence; otherwise a rule mode may answer the prompt programmatically.
/// Unknown prompts yield "" and count as a miss.
///
/// Table file: UTF-8 lines "HEX-SHA256<TAB>response" with newline, tab and backslash
/// escaped; "@mode<TAB>identity|porter|none" sets the rule mode; lines
/// starting with '#' are comments.
///
/// Rule modes answer the three prompt kinds:
///   VS  - "term:stem" per requested term (identity or Porter stem)
///   CS  - the paragraph, verbatim (identity) or as Porter-stemmed tokens
///   ECS - capitalized-word entity phrases, one per line
class MockProvider : public ChatProvider {
public:
    enum class RuleMode { None, Identity, Porter };

    MockProvider() = default;
    explicit MockProvider(RuleMode mode) : mode_(mode) {}

    static std::unique_ptr<MockProvider> load(const std::string& path);
    void save(const std::string& path) const;

    /// Registers a canned response for an exact prompt text.
    void add_response(std::string_view user_text, std::string response);
    void set_mode(RuleMode mode) { mode_ = mode; }
    RuleMode mode() const { return mode_; }

    std::string complete_once(const ChatRequest& req, const std::string& request_id) override;
    bool contacts_network() const override { return false; }

    std::size_t misses() const { return misses_.load(); }

private:
    std::unordered_map<std::string, std::string> table_;
    RuleMode mode_ = RuleMode::None;
    std::atomic<std::size_t> misses_{0};
};

std::string_view to_string(MockProvider::RuleMode mode);
MockProvider::RuleMode parse_rule_mode(std::string_view name);

/// OpenAI-compatible chat-completions endpoint over HTTP(S).
class HttpProvider : public ChatProvider {
public:
    explicit HttpProvider(ProviderConfig cfg);

    std::string complete_once(const ChatRequest& req, const std::string& request_id) override;
    bool contacts_network() const override { return true; }

    /// Request body sent for `req`; exposed for tests.
    std::string request_body(const ChatRequest& req) const;

    /// Assistant text of the first choice. Throws MalformedResponseError.
    static std::string parse_response(std::string_view body, const std::string& request_id);

private:
    ProviderConfig cfg_;
    std::string scheme_host_port_;
    std::string path_;
};

struct GatewayStats {
    std::size_t requests = 0;
    std::size_t retries = 0;
    std::size_t failures = 0;
    std::size_t prompt_bytes = 0;
    std::size_t response_bytes = 0;
};

/// Retrying, concurrency-bounded front end over a provider.
class LlmGateway {
public:
    LlmGateway(ProviderConfig cfg, std::unique_ptr<ChatProvider> provider);

    /// Assistant text for `req`. Transient transport failures are retried up
    /// to max_retries times with exponential backoff; auth and malformed-
    /// response errors propagate immediately.
    std::string complete(const ChatRequest& req);

    const ProviderConfig& config() const { return cfg_; }
    DecodeParams decode() const { return default_decode(cfg_.profile); }
    ChatProvider& provider() { return *provider_; }
    bool contacts_network() const { return provider_->contacts_network(); }
    GatewayStats stats() const;

private:
    ProviderConfig cfg_;
    std::unique_ptr<ChatProvider> provider_;
    std::counting_semaphore<1024> slots_;
    std::atomic<std::size_t> requests_{0};
    std::atomic<std::size_t> retries_{0};
    std::atomic<std::size_t> failures_{0};
    std::atomic<std::size_t> prompt_bytes_{0};
    std::atomic<std::size_t> response_bytes_{0};
};

/// Free-function form: one gateway call with a fresh retry budget.
std::string complete(LlmGateway& gateway, const ChatRequest& req);

// ---------------------------------------------------------------------------
// Prompts

struct OneShotSamples {
    std::string terms_sample;
    std::string stemmed_sample;
    std::string paragraph_sample;
    std::string stemmed_paragraph_sample;
    std::string entities_extracted_sample;

    /// Built-in samples shipped with the tool.
    static OneShotSamples defaults();
    /// JSON object with the five fields above.
    static OneShotSamples load(const std::string& path);
    void validate() const;
};

inline constexpr std::size_t kDefaultVsBatchSize = 50;
inline constexpr int kVsMaxOutputTokens = 512;
inline constexpr int kEcsMaxOutputTokens = 512;

inline constexpr std::string_view kVsAsk = "Can you provide the stemmed version of these terms?";
inline constexpr std::string_view kVsAnswer = "Stemmer:";
inline constexpr std::string_view kCsAsk = "Can you provide the stemmed version of this paragraph?";
inline constexpr std::string_view kCsAnswer = "Stemmed paragraph:";
inline constexpr std::string_view kEcsAsk = "Can you extract all entities from the following paragraph?";
inline constexpr std::string_view kEcsAnswer = "Extracted entities:";

ChatRequest build_vs_prompt(std::span<const std::string> terms, const OneShotSamples& samples,
                            DecodeParams decode = {});
ChatRequest build_cs_prompt(std::string_view paragraph, const OneShotSamples& samples,
                            DecodeParams decode = {});
ChatRequest build_ecs_prompt(std::string_view paragraph, const OneShotSamples& samples,
                             DecodeParams decode = {});

enum class PromptKind { Vocabulary, Contextual, Entities, Unknown };

/// Recovers the kind and the substituted payload (terms line or paragraph)
/// from a prompt produced by the builders above.
struct PromptPayload {
    PromptKind kind = PromptKind::Unknown;
    std::string payload;
};
PromptPayload classify_prompt(std::string_view user_text);

// ---------------------------------------------------------------------------
// Stem cache

/// word -> stems, write-once per key. Reads may run concurrently with puts.
class StemCache {
public:
    StemCache() = default;
    /// Cache persisted to `path` by checkpoint(); loaded now if the file exists.
    explicit StemCache(std::string path);

    StemCache(const StemCache&) = delete;
    StemCache& operator=(const StemCache&) = delete;

    std::optional<std::vector<std::string>> get(std::string_view word) const;

    /// Throws ConflictError when `word` already maps to different stems, and
    /// InvalidArgument on an empty stem list or non-lowercase input.
    void put(const std::string& word, std::vector<std::string> stems);

    std::size_t size() const;
    bool dirty() const;

    /// Writes to the backing path (if any) and clears the dirty flag.
    void checkpoint();

    /// TSV "word<TAB>stem1[ stem2 ...]", sorted by word.
    void save(const std::string& path) const;
    void load(const std::string& path);

    std::vector<std::pair<std::string, std::vector<std::string>>> entries() const;

private:
    mutable std::shared_mutex mu_;
    std::unordered_map<std::string, std::vector<std::string>> entries_;
    bool dirty_ = false;
    std::string path_;
};

}  // namespace stemlab
