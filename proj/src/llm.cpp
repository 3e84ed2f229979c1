#include "stemlab/llm.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "stemlab/stemmers.hpp"
#include "stemlab/text.hpp"

namespace stemlab {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

DecodeParams default_decode(DecodeProfile profile) {
    switch (profile) {
        case DecodeProfile::Remote: return {0.0, 1.0};
        case DecodeProfile::Local: return {0.000001, 0.9};
    }
    return {};
}

std::string_view to_string(DecodeProfile profile) {
    return profile == DecodeProfile::Local ? "local" : "remote";
}

DecodeProfile parse_decode_profile(std::string_view name) {
    if (name == "remote") return DecodeProfile::Remote;
    if (name == "local") return DecodeProfile::Local;
    throw InvalidArgument("unknown decode profile: " + std::string(name));
}

void ChatRequest::validate() const {
    if (user_text.empty()) throw InvalidArgument("chat request has empty user_text");
    if (!(temperature >= 0.0)) throw InvalidArgument("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw InvalidArgument("top_p must be in (0, 1]");
    if (max_output_tokens < 1) throw InvalidArgument("max_output_tokens must be >= 1");
}

void ProviderConfig::validate() const {
    if (max_retries < 0 || max_retries > 10) throw InvalidArgument("max_retries must be in [0, 10]");
    if (max_concurrent_requests < 1) throw InvalidArgument("max_concurrent_requests must be >= 1");
    if (backoff_base.count() < 0) throw InvalidArgument("backoff_base must be >= 0");
    if (request_timeout.count() <= 0) throw InvalidArgument("request_timeout must be > 0");
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xf]);
    }
    return out;
}

std::string request_id_for(const ChatRequest& req) {
    return "req-" + sha256_hex(req.user_text).substr(0, 12);
}

// ---------------------------------------------------------------------------
// Mock provider

namespace {

std::string escape_field(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string unescape_field(std::string_view s, const std::string& path, std::size_t lineno) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '\\') {
            out.push_back(s[i]);
            continue;
        }
        if (++i == s.size()) throw ParseError(path, lineno, "dangling escape");
        switch (s[i]) {
            case '\\': out.push_back('\\'); break;
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            case 'r': out.push_back('\r'); break;
            default: throw ParseError(path, lineno, std::string("unknown escape \\") + s[i]);
        }
    }
    return out;
}

bool is_hex_digest(std::string_view s) {
    return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
               return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
           });
}

std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

}  // namespace

std::string_view to_string(MockProvider::RuleMode mode) {
    switch (mode) {
        case MockProvider::RuleMode::None: return "none";
        case MockProvider::RuleMode::Identity: return "identity";
        case MockProvider::RuleMode::Porter: return "porter";
    }
    return "none";
}

MockProvider::RuleMode parse_rule_mode(std::string_view name) {
    if (name == "none") return MockProvider::RuleMode::None;
    if (name == "identity") return MockProvider::RuleMode::Identity;
    if (name == "porter") return MockProvider::RuleMode::Porter;
    throw InvalidArgument("unknown mock rule mode: " + std::string(name));
}

std::unique_ptr<MockProvider> MockProvider::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mock table: " + path);
    auto mock = std::make_unique<MockProvider>();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError(path, lineno, "expected KEY<TAB>VALUE");
        const std::string_view key(line.data(), tab);
        const std::string_view value(line.data() + tab + 1, line.size() - tab - 1);
        if (key == "@mode") {
            try {
                mock->mode_ = parse_rule_mode(value);
            } catch (const InvalidArgument& e) {
                throw ParseError(path, lineno, e.what());
            }
            continue;
        }
        if (!is_hex_digest(key)) throw ParseError(path, lineno, "key is not a lowercase hex SHA-256");
        mock->table_.insert_or_assign(std::string(key), unescape_field(value, path, lineno));
    }
    return mock;
}

void MockProvider::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write mock table: " + path);
    out << "@mode\t" << to_string(mode_) << '\n';
    std::vector<std::pair<std::string, std::string>> rows(table_.begin(), table_.end());
    std::sort(rows.begin(), rows.end());
    for (const auto& [k, v] : rows) out << k << '\t' << escape_field(v) << '\n';
}

void MockProvider::add_response(std::string_view user_text, std::string response) {
    table_.insert_or_assign(sha256_hex(user_text), std::move(response));
}

std::string MockProvider::complete_once(const ChatRequest& req, const std::string&) {
    if (auto it = table_.find(sha256_hex(req.user_text)); it != table_.end()) return it->second;
    if (mode_ != RuleMode::None) {
        const auto prompt = classify_prompt(req.user_text);
        const bool porter = mode_ == RuleMode::Porter;
        switch (prompt.kind) {
            case PromptKind::Vocabulary: {
                std::string out;
                for (const auto& term : split_ws(prompt.payload)) {
                    if (!out.empty()) out.push_back('\n');
                    out += term + ':' + (porter ? porter_stem(term) : term);
                }
                return out;
            }
            case PromptKind::Contextual:
                if (!porter) return prompt.payload;
                return join_tokens(stem_stream(tokenize(prompt.payload), [](const std::string& w) {
                    return porter_stem(w);
                }));
            case PromptKind::Entities: {
                std::string out;
                for (const auto& phrase : capitalized_phrases(prompt.payload)) {
                    if (!out.empty()) out.push_back('\n');
                    out += phrase;
                }
                return out;
            }
            case PromptKind::Unknown: break;
        }
    }
    misses_.fetch_add(1);
    return {};
}

// ---------------------------------------------------------------------------
// HTTP provider

HttpProvider::HttpProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg_.endpoint_url, m, url_re)) {
        throw InvalidArgument("endpoint_url must be http(s)://host[:port]/path: " + cfg_.endpoint_url);
    }
    scheme_host_port_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";
}

std::string HttpProvider::request_body(const ChatRequest& req) const {
    json messages = json::array();
    if (req.system_text && !req.system_text->empty()) {
        messages.push_back({{"role", "system"}, {"content", *req.system_text}});
    }
    messages.push_back({{"role", "user"}, {"content", req.user_text}});
    json body = {
        {"model", cfg_.model_name},
        {"messages", messages},
        {"temperature", req.temperature},
        {"top_p", req.top_p},
        {"max_tokens", req.max_output_tokens},
    };
    return body.dump();
}

std::string HttpProvider::parse_response(std::string_view body, const std::string& request_id) {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw MalformedResponseError(request_id, "response is not JSON");
    try {
        const auto& content = doc.at("choices").at(0).at("message").at("content");
        if (content.is_null()) return {};
        return content.get<std::string>();
    } catch (const json::exception& e) {
        throw MalformedResponseError(request_id, std::string("unexpected response shape: ") + e.what());
    }
}

std::string HttpProvider::complete_once(const ChatRequest& req, const std::string& request_id) {
    httplib::Headers headers;
    if (!cfg_.api_key_env.empty()) {
        const char* key = std::getenv(cfg_.api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw AuthError(request_id, "environment variable " + cfg_.api_key_env + " is not set");
        }
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    httplib::Client client(scheme_host_port_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.request_timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.request_timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    auto res = client.Post(path_, headers, request_body(req), "application/json");
    if (!res) {
        throw TransportFailure(request_id, "request failed: " + httplib::to_string(res.error()), true);
    }
    const int status = res->status;
    if (status == 401 || status == 403) {
        throw AuthError(request_id, "provider rejected credentials (HTTP " + std::to_string(status) + ")");
    }
    if (status == 408 || status == 429 || status >= 500) {
        throw TransportFailure(request_id, "HTTP " + std::to_string(status), true);
    }
    if (status < 200 || status >= 300) {
        throw TransportFailure(request_id, "HTTP " + std::to_string(status) + ": " + res->body, false);
    }
    return parse_response(res->body, request_id);
}

// ---------------------------------------------------------------------------
// Gateway

LlmGateway::LlmGateway(ProviderConfig cfg, std::unique_ptr<ChatProvider> provider)
    : cfg_((cfg.validate(), std::move(cfg))),
      provider_(std::move(provider)),
      slots_(std::min<std::ptrdiff_t>(cfg_.max_concurrent_requests, 1024)) {
    if (!provider_) throw InvalidArgument("gateway needs a provider");
}

std::string LlmGateway::complete(const ChatRequest& req) {
    req.validate();
    const auto id = request_id_for(req);

    slots_.acquire();
    struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
    } release{slots_};

    for (int attempt = 0;; ++attempt) {
        try {
            requests_.fetch_add(1);
            prompt_bytes_.fetch_add(req.user_text.size());
            auto text = provider_->complete_once(req, id);
            response_bytes_.fetch_add(text.size());
            return text;
        } catch (const TransportFailure& e) {
            if (!e.transient() || attempt >= cfg_.max_retries) {
                failures_.fetch_add(1);
                throw;
            }
            retries_.fetch_add(1);
            std::this_thread::sleep_for(cfg_.backoff_base * (1LL << attempt));
        } catch (const ProviderError&) {
            failures_.fetch_add(1);
            throw;
        }
    }
}

GatewayStats LlmGateway::stats() const {
    return {requests_.load(), retries_.load(), failures_.load(), prompt_bytes_.load(),
            response_bytes_.load()};
}

std::string complete(LlmGateway& gateway, const ChatRequest& req) {
    return gateway.complete(req);
}

// ---------------------------------------------------------------------------
// Prompts

namespace {

constexpr std::string_view kVsPreamble =
    "You are a professional stemmer that is responsible to stem text. Text stemming is a "
    "natural language processing technique that is used to reduce words to their base form, "
    "also known as the root form. The process of stemming is used to normalize text and make "
    "it easier to process.\n"
    "Your output should strictly follow the format \"original word:stem\". If a single "
    "original word produces multiple stems, separate the stems with a space.\n";

constexpr std::string_view kCsPreamble =
    "You specialize in text stemming, text stemming is a natural language processing "
    "technique that is used to reduce words to their base form, also known as the root form. "
    "The process of stemming is used to normalize text and make it easier to process. You "
    "should stem every word except from names of people, places, organisations, brands. For "
    "example, the words \"programming,\" \"programmer,\" and \"programs\" can all be reduced "
    "down to the common stem \"program\". However, in the sentence \"Programs PTY. LTD. sold "
    "for 1 billion euros\", the word \"programs\" should not be stemmed because it refers to "
    "the name of a company.\n";

constexpr std::string_view kEcsPreamble =
    "You specialize in identifying and preserving entities, such as names, brands, or "
    "organisations, within text paragraphs. It's imperative to ensure these terms are not "
    "stemmed to enhance search engine performance.\n";

std::string one_shot(std::string_view preamble, std::string_view ask, std::string_view answer,
                     std::string_view sample_in, std::string_view sample_out,
                     std::string_view input) {
    std::string out;
    out.reserve(preamble.size() + 2 * ask.size() + sample_in.size() + sample_out.size() +
                input.size() + 2 * answer.size() + 8);
    out += preamble;
    out += ask;
    out += ' ';
    out += sample_in;
    out += '\n';
    out += answer;
    out += ' ';
    out += sample_out;
    out += '\n';
    out += ask;
    out += ' ';
    out += input;
    out += '\n';
    out += answer;
    return out;
}

ChatRequest make_request(std::string user_text, DecodeParams decode, int max_tokens) {
    ChatRequest req;
    req.user_text = std::move(user_text);
    req.temperature = decode.temperature;
    req.top_p = decode.top_p;
    req.max_output_tokens = max_tokens;
    return req;
}

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

OneShotSamples OneShotSamples::defaults() {
    OneShotSamples s;
    s.terms_sample = "running ponies wolves connected";
    s.stemmed_sample = "running:run\nponies:pony\nwolves:wolf\nconnected:connect";
    s.paragraph_sample =
        "Programs PTY. LTD. sold for 1 billion euros after connecting with investors in Paris.";
    s.stemmed_paragraph_sample =
        "Programs PTY. LTD. sold for 1 billion euro after connect with investor in Paris.";
    s.entities_extracted_sample = "Programs PTY. LTD.\nParis";
    return s;
}

OneShotSamples OneShotSamples::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open one-shot samples: " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw ParseError(path, 0, "expected a JSON object");
    OneShotSamples s;
    try {
        s.terms_sample = doc.at("terms_sample").get<std::string>();
        s.stemmed_sample = doc.at("stemmed_sample").get<std::string>();
        s.paragraph_sample = doc.at("paragraph_sample").get<std::string>();
        s.stemmed_paragraph_sample = doc.at("stemmed_paragraph_sample").get<std::string>();
        s.entities_extracted_sample = doc.at("entities_extracted_sample").get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError(path, 0, e.what());
    }
    s.validate();
    return s;
}

void OneShotSamples::validate() const {
    for (const auto* f : {&terms_sample, &stemmed_sample, &paragraph_sample,
                          &stemmed_paragraph_sample, &entities_extracted_sample}) {
        if (blank(*f)) throw InvalidArgument("one-shot samples must all be non-empty");
    }
    std::istringstream lines(stemmed_sample);
    std::string line;
    while (std::getline(lines, line)) {
        if (blank(line)) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos || blank(line.substr(0, colon)) ||
            blank(line.substr(colon + 1))) {
            throw InvalidArgument("stemmed_sample line is not 'original word:stem': " + line);
        }
    }
}

ChatRequest build_vs_prompt(std::span<const std::string> terms, const OneShotSamples& samples,
                            DecodeParams decode) {
    if (terms.empty()) throw InvalidArgument("VS prompt needs at least one term");
    std::string joined;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (i) joined.push_back(' ');
        joined += terms[i];
    }
    return make_request(one_shot(kVsPreamble, kVsAsk, kVsAnswer, samples.terms_sample,
                                 samples.stemmed_sample, joined),
                        decode, kVsMaxOutputTokens);
}

ChatRequest build_cs_prompt(std::string_view paragraph, const OneShotSamples& samples,
                            DecodeParams decode) {
    if (paragraph.empty()) throw InvalidArgument("CS prompt needs a non-empty paragraph");
    const auto estimate = std::max<std::size_t>(1, tokenize(paragraph).size());
    return make_request(one_shot(kCsPreamble, kCsAsk, kCsAnswer, samples.paragraph_sample,
                                 samples.stemmed_paragraph_sample, paragraph),
                        decode, static_cast<int>(4 * estimate));
}

ChatRequest build_ecs_prompt(std::string_view paragraph, const OneShotSamples& samples,
                             DecodeParams decode) {
    if (paragraph.empty()) throw InvalidArgument("ECS prompt needs a non-empty paragraph");
    return make_request(one_shot(kEcsPreamble, kEcsAsk, kEcsAnswer, samples.paragraph_sample,
                                 samples.entities_extracted_sample, paragraph),
                        decode, kEcsMaxOutputTokens);
}

PromptPayload classify_prompt(std::string_view text) {
    struct Shape {
        PromptKind kind;
        std::string_view ask;
        std::string_view answer;
    };
    static constexpr Shape kShapes[] = {
        {PromptKind::Vocabulary, kVsAsk, kVsAnswer},
        {PromptKind::Contextual, kCsAsk, kCsAnswer},
        {PromptKind::Entities, kEcsAsk, kEcsAnswer},
    };
    for (const auto& shape : kShapes) {
        const std::string tail = "\n" + std::string(shape.answer);
        if (!text.ends_with(tail)) continue;
        // The ask appears once for the one-shot sample and once for the input.
        const auto first = text.find(shape.ask);
        if (first == std::string_view::npos) continue;
        const auto second = text.find(shape.ask, first + shape.ask.size());
        if (second == std::string_view::npos) continue;
        const auto begin = second + shape.ask.size() + 1;
        const auto end = text.size() - tail.size();
        if (begin > end) continue;
        return {shape.kind, std::string(text.substr(begin, end - begin))};
    }
    return {};
}

// ---------------------------------------------------------------------------
// Stem cache

namespace {

void check_cache_entry(std::string_view word, const std::vector<std::string>& stems) {
    if (word.empty() || fold_case(word) != word) {
        throw InvalidArgument("stem cache keys must be non-empty lowercase: '" + std::string(word) + "'");
    }
    if (stems.empty()) throw InvalidArgument("stem list for '" + std::string(word) + "' is empty");
    for (const auto& s : stems) {
        if (s.empty() || s.find_first_of(" \t\n") != std::string::npos) {
            throw InvalidArgument("invalid stem for '" + std::string(word) + "'");
        }
    }
}

}  // namespace

StemCache::StemCache(std::string path) : path_(std::move(path)) {
    if (!path_.empty() && std::ifstream(path_).good()) load(path_);
}

std::optional<std::vector<std::string>> StemCache::get(std::string_view word) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(std::string(word));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void StemCache::put(const std::string& word, std::vector<std::string> stems) {
    check_cache_entry(word, stems);
    std::unique_lock lock(mu_);
    auto [it, inserted] = entries_.try_emplace(word, std::move(stems));
    if (inserted) {
        dirty_ = true;
        return;
    }
    if (it->second != stems) {
        throw ConflictError("stem cache already maps '" + word + "' to different stems");
    }
}

std::size_t StemCache::size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
}

bool StemCache::dirty() const {
    std::shared_lock lock(mu_);
    return dirty_;
}

void StemCache::checkpoint() {
    if (path_.empty()) return;
    save(path_);
    std::unique_lock lock(mu_);
    dirty_ = false;
}

std::vector<std::pair<std::string, std::vector<std::string>>> StemCache::entries() const {
    std::shared_lock lock(mu_);
    std::vector<std::pair<std::string, std::vector<std::string>>> rows(entries_.begin(), entries_.end());
    std::sort(rows.begin(), rows.end());
    return rows;
}

void StemCache::save(const std::string& path) const {
    const auto rows = entries();
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write stem cache: " + path);
        for (const auto& [word, stems] : rows) {
            out << word << '\t';
            for (std::size_t i = 0; i < stems.size(); ++i) out << (i ? " " : "") << stems[i];
            out << '\n';
        }
        if (!out) throw IoError("failed writing stem cache: " + path);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot replace stem cache: " + path);
}

void StemCache::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open stem cache: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError(path, lineno, "expected word<TAB>stems");
        auto stems = split_ws(std::string_view(line).substr(tab + 1));
        try {
            put(line.substr(0, tab), std::move(stems));
        } catch (const Error& e) {
            throw ParseError(path, lineno, e.what());
        }
    }
    std::unique_lock lock(mu_);
    dirty_ = false;
}

}  // namespace stemlab
