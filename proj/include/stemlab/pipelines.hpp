#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stemlab/llm.hpp"
#include "stemlab/stemmers.hpp"
#include "stemlab/text.hpp"

namespace stemlab {

using StemList = std::vector<std::string>;

/// word -> one or more stems. Words absent at application time map to
/// themselves.
using StemMapping = std::unordered_map<std::string, StemList>;

struct VsParse {
    StemMapping mapping;
    std::size_t skipped_lines = 0;
};

/// Parses "original word:stem[ stem ...]" lines. Blank lines are ignored;
/// lines whose word or stems are not single tokens are skipped and counted.
/// A repeated word keeps its first entry.
VsParse parse_vs_response(std::string_view text);

/// Deterministic, thread-safe tallies surfaced in experiment reports.
struct PipelineCounters {
    std::atomic<std::size_t> vs_requests{0};
    std::atomic<std::size_t> vs_terms_sent{0};
    std::atomic<std::size_t> vs_cache_hits{0};
    std::atomic<std::size_t> vs_skipped_lines{0};
    std::atomic<std::size_t> vs_identity_fallbacks{0};
    std::atomic<std::size_t> cs_requests{0};
    std::atomic<std::size_t> cs_fallbacks{0};
    std::atomic<std::size_t> ecs_requests{0};
    std::atomic<std::size_t> ecs_errors{0};
    std::atomic<std::size_t> entity_cache_hits{0};
    std::atomic<std::size_t> entity_words{0};

    struct Event {
        std::string doc_id;
        std::string reason;
        bool operator<(const Event& o) const {
            return doc_id != o.doc_id ? doc_id < o.doc_id : reason < o.reason;
        }
    };

    void record(std::string doc_id, std::string reason);
    /// Events sorted by doc id.
    std::vector<Event> events() const;

private:
    mutable std::mutex mu_;
    std::vector<Event> events_;
};

// ---------------------------------------------------------------------------
// Vocabulary stemming

/// Stems batches of distinct words. Must be thread-safe when concurrent().
class VocabularyStemmer {
public:
    virtual ~VocabularyStemmer() = default;
    /// Partial mapping for `words`; words missing from the result fall back
    /// to identity.
    virtual StemMapping stem_batch(std::span<const std::string> words) = 0;
    virtual std::size_t batch_size() const = 0;
    virtual bool concurrent() const { return true; }
    /// Whether results should be written to the stem cache.
    virtual bool cacheable() const { return true; }
};

class ClassicVocabularyStemmer : public VocabularyStemmer {
public:
    explicit ClassicVocabularyStemmer(StemFn fn, std::size_t batch = 4096)
        : fn_(std::move(fn)), batch_(batch) {}

    StemMapping stem_batch(std::span<const std::string> words) override;
    std::size_t batch_size() const override { return batch_; }
    bool cacheable() const override { return false; }

private:
    StemFn fn_;
    std::size_t batch_;
};

/// One VS prompt per batch through the gateway.
class LlmVocabularyStemmer : public VocabularyStemmer {
public:
    LlmVocabularyStemmer(LlmGateway& gateway, OneShotSamples samples,
                         std::size_t batch = kDefaultVsBatchSize,
                         PipelineCounters* counters = nullptr);

    StemMapping stem_batch(std::span<const std::string> words) override;
    std::size_t batch_size() const override { return batch_; }

private:
    LlmGateway& gateway_;
    OneShotSamples samples_;
    std::size_t batch_;
    PipelineCounters* counters_;
};

/// Sorted set of distinct tokens.
std::vector<std::string> build_vocabulary(std::span<const TokenStream> corpus);

/// Resolves every vocabulary word through `cache`, then the stemmer in
/// batches (in parallel when the stemmer allows it, bounded by `workers`).
/// The result covers the whole vocabulary. On a stemmer error the cache is
/// checkpointed before the error propagates.
StemMapping vocabulary_stem(std::span<const TokenStream> corpus, VocabularyStemmer& stemmer,
                            StemCache& cache, int workers = 0,
                            PipelineCounters* counters = nullptr);

/// Replaces each token by its stems (identity when unmapped).
/// With `first_stem_only`, only the first stem of each list is emitted.
TokenStream apply_mapping(const TokenStream& ts, const StemMapping& mapping,
                          bool first_stem_only = false);

// ---------------------------------------------------------------------------
// Contextual stemming

inline constexpr double kCsMinLengthRatio = 0.5;
inline constexpr double kCsMaxLengthRatio = 2.0;

/// Feeds `doc.text` (already truncated) to the LLM and tokenizes the reply.
/// Falls back to tokenize(doc.text) when the reply is empty, its token count
/// leaves [0.5, 2.0] x the input count, or the request fails with a transport
/// or malformed-response error. Auth errors propagate.
TokenStream contextual_stem(const RawDocument& doc, LlmGateway& gateway,
                            const OneShotSamples& samples, PipelineCounters* counters = nullptr);

// ---------------------------------------------------------------------------
// Entities

using EntityWords = std::set<std::string>;

struct EntitySet {
    std::string doc_id;
    EntityWords words;
};

/// Splits an entity-list reply on newlines, commas and semicolons, strips
/// list markers ("-", "*", "•", "1.", "1)"), and tokenizes each phrase.
/// Refusals such as "none" yield nothing.
EntityWords parse_entities(std::string_view text);

enum class EcsVariant { KeepOriginalOnly, KeepOriginalAndStem };

/// Non-entity tokens are replaced by their stems. Entity tokens stay as they
/// are; KeepOriginalAndStem also emits each stem that differs from the token,
/// right after it.
TokenStream ecs_transform(const TokenStream& ts, const EntityWords& entities, const StemFn& base,
                          EcsVariant variant);
TokenStream ecs_transform(const TokenStream& ts, const EntityWords& entities,
                          const StemMapping& base, EcsVariant variant, bool first_stem_only = false);

/// doc_id -> entity words. File: one line per document, doc_id then the words,
/// tab-separated.
class EntityCache {
public:
    std::optional<EntityWords> find(const std::string& doc_id) const;
    /// Overwrites any existing entry.
    void put(const std::string& doc_id, EntityWords words);
    std::size_t size() const;

    void save(const std::string& path) const;
    /// Adds the file's records; duplicate ids within the file are an error.
    void load(const std::string& path);

    std::map<std::string, EntityWords> entries() const;

private:
    mutable std::mutex mu_;
    std::map<std::string, EntityWords> entries_;
};

/// Source of per-document entity words. Implementations must be thread-safe.
class EntityProvider {
public:
    virtual ~EntityProvider() = default;
    virtual EntitySet extract(const RawDocument& doc) = 0;
};

/// Capitalized-word heuristic over the raw text; offline and deterministic.
class RuleEntityProvider : public EntityProvider {
public:
    EntitySet extract(const RawDocument& doc) override;
};

/// ECS prompt through the gateway. Transport or malformed-response failures
/// yield an empty set and a recorded event.
class LlmEntityProvider : public EntityProvider {
public:
    LlmEntityProvider(LlmGateway& gateway, OneShotSamples samples,
                      PipelineCounters* counters = nullptr);
    EntitySet extract(const RawDocument& doc) override;

private:
    LlmGateway& gateway_;
    OneShotSamples samples_;
    PipelineCounters* counters_;
};

/// Serves entries from `cache`; misses go to `fallback` (stored back into the
/// cache) or, without a fallback, produce an empty set.
class CachedEntityProvider : public EntityProvider {
public:
    CachedEntityProvider(EntityCache& cache, EntityProvider* fallback,
                         PipelineCounters* counters = nullptr)
        : cache_(cache), fallback_(fallback), counters_(counters) {}
    EntitySet extract(const RawDocument& doc) override;

private:
    EntityCache& cache_;
    EntityProvider* fallback_;
    PipelineCounters* counters_;
};

}  // namespace stemlab
