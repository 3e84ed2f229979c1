#include "stemlab/pipelines.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>

#include "stemlab/error.hpp"
#include "stemlab/parallel.hpp"

namespace stemlab {

void PipelineCounters::record(std::string doc_id, std::string reason) {
    std::lock_guard lock(mu_);
    events_.push_back({std::move(doc_id), std::move(reason)});
}

std::vector<PipelineCounters::Event> PipelineCounters::events() const {
    std::lock_guard lock(mu_);
    auto out = events_;
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        fn(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
}

// Normalizes an LLM-returned word; empty when it is not exactly one token.
std::string single_token(std::string_view raw) {
    auto toks = tokenize(raw);
    if (toks.size() != 1) return {};
    // Reject words carrying extra punctuation, e.g. "run," or "o'neil".
    if (fold_case(raw) != toks.front()) return {};
    return std::move(toks.front());
}

}  // namespace

VsParse parse_vs_response(std::string_view text) {
    VsParse out;
    for_each_line(text, [&](std::string_view raw) {
        const auto line = trim(raw);
        if (line.empty()) return;
        const auto colon = line.find(':');
        if (colon == std::string_view::npos) {
            ++out.skipped_lines;
            return;
        }
        auto word = single_token(trim(line.substr(0, colon)));
        std::istringstream rest{std::string(line.substr(colon + 1))};
        StemList stems;
        std::string piece;
        bool ok = !word.empty();
        while (ok && rest >> piece) {
            auto stem = single_token(piece);
            if (stem.empty()) {
                ok = false;
            } else {
                stems.push_back(std::move(stem));
            }
        }
        if (!ok || stems.empty()) {
            ++out.skipped_lines;
            return;
        }
        out.mapping.try_emplace(std::move(word), std::move(stems));
    });
    return out;
}

// ---------------------------------------------------------------------------
// VS

StemMapping ClassicVocabularyStemmer::stem_batch(std::span<const std::string> words) {
    StemMapping out;
    out.reserve(words.size());
    for (const auto& w : words) out.emplace(w, StemList{fn_(w)});
    return out;
}

LlmVocabularyStemmer::LlmVocabularyStemmer(LlmGateway& gateway, OneShotSamples samples,
                                           std::size_t batch, PipelineCounters* counters)
    : gateway_(gateway), samples_(std::move(samples)), batch_(batch), counters_(counters) {
    if (batch_ == 0) throw InvalidArgument("VS batch size must be >= 1");
    samples_.validate();
}

StemMapping LlmVocabularyStemmer::stem_batch(std::span<const std::string> words) {
    const auto req = build_vs_prompt(words, samples_, gateway_.decode());
    if (counters_) {
        counters_->vs_requests.fetch_add(1);
        counters_->vs_terms_sent.fetch_add(words.size());
    }
    auto parsed = parse_vs_response(gateway_.complete(req));
    if (counters_) counters_->vs_skipped_lines.fetch_add(parsed.skipped_lines);
    return std::move(parsed.mapping);
}

std::vector<std::string> build_vocabulary(std::span<const TokenStream> corpus) {
    std::vector<std::string> vocab;
    for (const auto& ts : corpus) vocab.insert(vocab.end(), ts.begin(), ts.end());
    std::sort(vocab.begin(), vocab.end());
    vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
    return vocab;
}

StemMapping vocabulary_stem(std::span<const TokenStream> corpus, VocabularyStemmer& stemmer,
                            StemCache& cache, int workers, PipelineCounters* counters) {
    const auto vocab = build_vocabulary(corpus);
    StemMapping mapping;
    mapping.reserve(vocab.size());

    std::vector<std::string> pending;
    for (const auto& w : vocab) {
        if (auto hit = cache.get(w)) {
            mapping.emplace(w, std::move(*hit));
            if (counters) counters->vs_cache_hits.fetch_add(1);
        } else {
            pending.push_back(w);
        }
    }

    const std::size_t batch = std::max<std::size_t>(1, stemmer.batch_size());
    const auto n_batches = static_cast<std::ptrdiff_t>((pending.size() + batch - 1) / batch);
    std::vector<StemMapping> results(static_cast<std::size_t>(n_batches));
    const int threads = stemmer.concurrent() ? resolve_workers(workers) : 1;
    ExceptionGuard guard;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (std::ptrdiff_t b = 0; b < n_batches; ++b) {
        guard.run([&] {
            const auto begin = static_cast<std::size_t>(b) * batch;
            const auto len = std::min(batch, pending.size() - begin);
            const std::span<const std::string> words(pending.data() + begin, len);
            auto got = stemmer.stem_batch(words);
            StemMapping kept;
            for (const auto& w : words) {
                auto it = got.find(w);
                if (it == got.end()) continue;
                if (stemmer.cacheable()) cache.put(w, it->second);
                kept.emplace(w, std::move(it->second));
            }
            results[static_cast<std::size_t>(b)] = std::move(kept);
        });
    }
    if (stemmer.cacheable() && cache.dirty()) cache.checkpoint();
    guard.rethrow();

    for (auto& r : results) {
        for (auto& [w, stems] : r) mapping.emplace(w, std::move(stems));
    }
    for (const auto& w : pending) {
        if (!mapping.contains(w)) {
            mapping.emplace(w, StemList{w});
            if (counters) counters->vs_identity_fallbacks.fetch_add(1);
        }
    }
    return mapping;
}

TokenStream apply_mapping(const TokenStream& ts, const StemMapping& mapping, bool first_stem_only) {
    TokenStream out;
    out.reserve(ts.size());
    for (const auto& t : ts) {
        auto it = mapping.find(t);
        if (it == mapping.end()) {
            out.push_back(t);
        } else if (first_stem_only) {
            out.push_back(it->second.front());
        } else {
            out.insert(out.end(), it->second.begin(), it->second.end());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CS

TokenStream contextual_stem(const RawDocument& doc, LlmGateway& gateway,
                            const OneShotSamples& samples, PipelineCounters* counters) {
    auto input = tokenize(doc.text);
    if (input.empty()) return input;
    std::string reply;
    try {
        if (counters) counters->cs_requests.fetch_add(1);
        reply = gateway.complete(build_cs_prompt(doc.text, samples, gateway.decode()));
    } catch (const AuthError&) {
        throw;
    } catch (const ProviderError& e) {
        if (counters) {
            counters->cs_fallbacks.fetch_add(1);
            counters->record(doc.doc_id, std::string("cs provider error: ") + e.what());
        }
        return input;
    }
    auto out = tokenize(reply);
    const double n = static_cast<double>(input.size());
    const double m = static_cast<double>(out.size());
    if (out.empty() || m < kCsMinLengthRatio * n || m > kCsMaxLengthRatio * n) {
        if (counters) {
            counters->cs_fallbacks.fetch_add(1);
            counters->record(doc.doc_id, "cs length guard: " + std::to_string(out.size()) + " vs " +
                                             std::to_string(input.size()) + " tokens");
        }
        return input;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Entities

EntityWords parse_entities(std::string_view text) {
    static const std::regex marker(R"(^\s*(?:[-*]|\xE2\x80\xA2|\d+[.)])\s*)");
    static const std::set<std::string> refusals = {"none", "n/a", "no entities",
                                                   "no entities found", "none found"};
    EntityWords out;
    std::string phrase;
    auto flush = [&] {
        std::string p = std::regex_replace(phrase, marker, "", std::regex_constants::format_first_only);
        phrase.clear();
        const auto trimmed = std::string(trim(p));
        std::string lowered = fold_case(trimmed);
        while (!lowered.empty() && (lowered.back() == '.' || lowered.back() == '!')) lowered.pop_back();
        if (refusals.contains(lowered)) return;
        for (auto& w : tokenize(trimmed)) out.insert(std::move(w));
    };
    for (char c : text) {
        if (c == '\n' || c == ',' || c == ';') {
            flush();
        } else {
            phrase.push_back(c);
        }
    }
    flush();
    return out;
}

namespace {

template <typename Emit>
TokenStream ecs_apply(const TokenStream& ts, const EntityWords& entities, EcsVariant variant,
                      Emit&& emit_stems) {
    TokenStream out;
    out.reserve(ts.size() + (variant == EcsVariant::KeepOriginalAndStem ? entities.size() : 0));
    for (const auto& t : ts) {
        if (!entities.contains(t)) {
            emit_stems(t, out, /*skip_equal=*/false);
            continue;
        }
        out.push_back(t);
        if (variant == EcsVariant::KeepOriginalAndStem) emit_stems(t, out, /*skip_equal=*/true);
    }
    return out;
}

}  // namespace

TokenStream ecs_transform(const TokenStream& ts, const EntityWords& entities, const StemFn& base,
                          EcsVariant variant) {
    return ecs_apply(ts, entities, variant, [&](const std::string& t, TokenStream& out, bool skip_equal) {
        auto s = base(t);
        if (!(skip_equal && s == t)) out.push_back(std::move(s));
    });
}

TokenStream ecs_transform(const TokenStream& ts, const EntityWords& entities,
                          const StemMapping& base, EcsVariant variant, bool first_stem_only) {
    return ecs_apply(ts, entities, variant, [&](const std::string& t, TokenStream& out, bool skip_equal) {
        auto it = base.find(t);
        if (it == base.end()) {
            if (!skip_equal) out.push_back(t);
            return;
        }
        const std::size_t n = first_stem_only ? 1 : it->second.size();
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = it->second[i];
            if (!(skip_equal && s == t)) out.push_back(s);
        }
    });
}

std::optional<EntityWords> EntityCache::find(const std::string& doc_id) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(doc_id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void EntityCache::put(const std::string& doc_id, EntityWords words) {
    std::lock_guard lock(mu_);
    entries_.insert_or_assign(doc_id, std::move(words));
}

std::size_t EntityCache::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

std::map<std::string, EntityWords> EntityCache::entries() const {
    std::lock_guard lock(mu_);
    return entries_;
}

void EntityCache::save(const std::string& path) const {
    const auto rows = entries();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write entity cache: " + path);
    for (const auto& [id, words] : rows) {
        out << id;
        for (const auto& w : words) out << '\t' << w;
        out << '\n';
    }
    if (!out) throw IoError("failed writing entity cache: " + path);
}

void EntityCache::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open entity cache: " + path);
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            const auto tab = line.find('\t', pos);
            fields.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
            if (tab == std::string::npos) break;
            pos = tab + 1;
        }
        if (fields.front().empty()) throw ParseError(path, lineno, "empty doc id");
        EntityWords words;
        for (std::size_t i = 1; i < fields.size(); ++i) {
            if (!is_token(fields[i])) {
                throw ParseError(path, lineno, "entity word is not a lowercase token: '" + fields[i] + "'");
            }
            words.insert(fields[i]);
        }
        if (!seen.insert(fields.front()).second) {
            throw ParseError(path, lineno, "duplicate doc id " + fields.front());
        }
        put(fields.front(), std::move(words));
    }
}

EntitySet RuleEntityProvider::extract(const RawDocument& doc) {
    EntitySet out{doc.doc_id, {}};
    for (const auto& phrase : capitalized_phrases(doc.text)) {
        for (auto& w : tokenize(phrase)) out.words.insert(std::move(w));
    }
    return out;
}

LlmEntityProvider::LlmEntityProvider(LlmGateway& gateway, OneShotSamples samples,
                                     PipelineCounters* counters)
    : gateway_(gateway), samples_(std::move(samples)), counters_(counters) {
    samples_.validate();
}

EntitySet LlmEntityProvider::extract(const RawDocument& doc) {
    EntitySet out{doc.doc_id, {}};
    if (tokenize(doc.text).empty()) return out;
    try {
        if (counters_) counters_->ecs_requests.fetch_add(1);
        out.words = parse_entities(gateway_.complete(build_ecs_prompt(doc.text, samples_, gateway_.decode())));
    } catch (const AuthError&) {
        throw;
    } catch (const ProviderError& e) {
        if (counters_) {
            counters_->ecs_errors.fetch_add(1);
            counters_->record(doc.doc_id, std::string("ecs provider error: ") + e.what());
        }
    }
    return out;
}

EntitySet CachedEntityProvider::extract(const RawDocument& doc) {
    if (auto hit = cache_.find(doc.doc_id)) {
        if (counters_) counters_->entity_cache_hits.fetch_add(1);
        return {doc.doc_id, std::move(*hit)};
    }
    if (fallback_ == nullptr) return {doc.doc_id, {}};
    auto got = fallback_->extract(doc);
    cache_.put(doc.doc_id, got.words);
    return got;
}

}  // namespace stemlab
