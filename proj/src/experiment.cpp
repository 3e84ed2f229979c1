#include "stemlab/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "stemlab/error.hpp"
#include "stemlab/parallel.hpp"

namespace stemlab {

using nlohmann::json;
namespace fs = std::filesystem;

std::string query_entity_key(const std::string& query_id) { return "query:" + query_id; }

std::unique_ptr<LlmGateway> make_gateway(const ProviderSettings& settings) {
    std::unique_ptr<ChatProvider> provider;
    if (settings.kind == "mock") {
        std::unique_ptr<MockProvider> mock =
            settings.mock_table.empty() ? std::make_unique<MockProvider>() : MockProvider::load(settings.mock_table);
        if (settings.mock_mode) mock->set_mode(*settings.mock_mode);
        provider = std::move(mock);
    } else if (settings.kind == "http") {
        provider = std::make_unique<HttpProvider>(settings.http);
    } else {
        throw InvalidArgument("provider kind must be mock or http, got '" + settings.kind + "'");
    }
    return std::make_unique<LlmGateway>(settings.http, std::move(provider));
}

// ---------------------------------------------------------------------------
// TokenCache

std::optional<TokenStream> TokenCache::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void TokenCache::put(const std::string& id, TokenStream tokens) {
    std::lock_guard lock(mu_);
    entries_[id] = std::move(tokens);
}

std::size_t TokenCache::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

void TokenCache::save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write token cache: " + tmp);
        std::lock_guard lock(mu_);
        for (const auto& [id, ts] : entries_) out << id << '\t' << join_tokens(ts) << '\n';
        if (!out) throw IoError("failed writing token cache: " + tmp);
    }
    fs::rename(tmp, path);
}

void TokenCache::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open token cache: " + path);
    std::string line;
    std::size_t lineno = 0;
    std::lock_guard lock(mu_);
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) throw ParseError(path, lineno, "expected id<TAB>tokens");
        std::string id = line.substr(0, tab);
        TokenStream ts = tokenize(std::string_view(line).substr(tab + 1));
        if (join_tokens(ts) != line.substr(tab + 1)) {
            throw ParseError(path, lineno, "token list is not in tokenizer form");
        }
        if (!entries_.emplace(std::move(id), std::move(ts)).second) {
            throw ParseError(path, lineno, "duplicate id");
        }
    }
}

// ---------------------------------------------------------------------------
// PipelineRunner

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

bool is_ecs(PipelineKind p) { return p == PipelineKind::Ecs1 || p == PipelineKind::Ecs2; }

void load_if_present(EntityCache& cache, const std::string& path) {
    if (!path.empty() && fs::exists(path)) cache.load(path);
}

}  // namespace

PipelineRunner::PipelineRunner(const ExperimentConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    samples_ = cfg_.samples_path.empty() ? OneShotSamples::defaults() : OneShotSamples::load(cfg_.samples_path);
    if (!cfg_.stopwords_path.empty()) stopwords_ = load_stopwords(cfg_.stopwords_path);
    if (!cfg_.dictionary_path.empty()) dict_ = StemDictionary::load(cfg_.dictionary_path);

    const bool llm_vocab = cfg_.pipeline == PipelineKind::Vs ||
                           (is_ecs(cfg_.pipeline) && cfg_.base_stemmer == StemmerKind::LlmVocabulary);
    if (llm_vocab) {
        stem_cache_ = cfg_.stem_cache_path.empty() ? std::make_unique<StemCache>()
                                                   : std::make_unique<StemCache>(cfg_.stem_cache_path);
    }
    if (cfg_.pipeline == PipelineKind::Cs && !cfg_.cs_cache_path.empty() && fs::exists(cfg_.cs_cache_path)) {
        cs_cache_.load(cfg_.cs_cache_path);
    }
    if (is_ecs(cfg_.pipeline)) {
        if (*cfg_.entity_provider == EntitySource::Cache) {
            entity_cache_.load(cfg_.entity_cache_path);
        } else {
            load_if_present(entity_cache_, cfg_.entity_cache_path);
        }
    }
}

PipelineRunner::~PipelineRunner() = default;

LlmGateway& PipelineRunner::need_gateway() {
    if (!gateway_) gateway_ = make_gateway(cfg_.provider);
    return *gateway_;
}

std::vector<TokenStream> PipelineRunner::preprocess(const std::vector<RawDocument>& raw) const {
    std::vector<TokenStream> out(raw.size());
    const auto n = static_cast<std::ptrdiff_t>(raw.size());
#pragma omp parallel for schedule(dynamic, 16) num_threads(resolve_workers(cfg_.workers))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        auto ts = tokenize(raw[u].text);
        out[u] = stopwords_.empty() ? std::move(ts) : remove_stopwords(ts, stopwords_);
    }
    return out;
}

StemMapping PipelineRunner::vocab_mapping(std::span<const TokenStream> streams) {
    LlmVocabularyStemmer stemmer(need_gateway(), samples_, cfg_.vs_batch_size, &counters_);
    return vocabulary_stem(streams, stemmer, *stem_cache_, cfg_.workers, &counters_);
}

std::vector<TokenStream> PipelineRunner::run_vocab(std::vector<TokenStream> streams, StemmerKind kind) {
    if (kind == StemmerKind::LlmVocabulary) {
        const auto mapping = vocab_mapping(streams);
        for (auto& ts : streams) ts = apply_mapping(ts, mapping, cfg_.first_stem_only);
        return streams;
    }
    const auto fn = make_stem_fn(kind, &dict_);
    return stem_corpus(streams, fn, cfg_.workers);
}

std::vector<TokenStream> PipelineRunner::run_cs(const std::vector<RawDocument>& raw) {
    LlmGateway& gw = need_gateway();
    std::vector<TokenStream> out(raw.size());
    ExceptionGuard guard;
    const auto n = static_cast<std::ptrdiff_t>(raw.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(resolve_workers(cfg_.workers))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        guard.run([&] {
            const auto& doc = raw[static_cast<std::size_t>(i)];
            TokenStream ts;
            if (auto hit = cs_cache_.find(doc.doc_id)) {
                ts = std::move(*hit);
            } else {
                // Per-document tallies tell a provider failure (not cached, so
                // a later run can retry) from a deterministic length fallback.
                PipelineCounters local;
                ts = contextual_stem(doc, gw, samples_, &local);
                counters_.cs_requests.fetch_add(local.cs_requests.load());
                counters_.cs_fallbacks.fetch_add(local.cs_fallbacks.load());
                bool provider_failed = false;
                for (auto& e : local.events()) {
                    provider_failed |= e.reason.starts_with("cs provider error");
                    counters_.record(e.doc_id, e.reason);
                }
                if (!provider_failed) cs_cache_.put(doc.doc_id, ts);
            }
            out[static_cast<std::size_t>(i)] = stopwords_.empty() ? std::move(ts) : remove_stopwords(ts, stopwords_);
        });
    }
    guard.rethrow();
    return out;
}

std::vector<TokenStream> PipelineRunner::run_ecs(const std::vector<RawDocument>& raw, std::size_t n_docs) {
    std::unique_ptr<EntityProvider> source;
    switch (*cfg_.entity_provider) {
        case EntitySource::Rule: source = std::make_unique<RuleEntityProvider>(); break;
        case EntitySource::Llm:
            source = std::make_unique<LlmEntityProvider>(need_gateway(), samples_, &counters_);
            break;
        case EntitySource::Cache: break;
    }
    const bool write_through = source && !cfg_.entity_cache_path.empty();
    CachedEntityProvider cached(entity_cache_, source.get(), &counters_);
    EntityProvider& provider = (write_through || !source) ? static_cast<EntityProvider&>(cached) : *source;

    std::vector<EntityWords> entities(raw.size());
    ExceptionGuard guard;
    const auto n = static_cast<std::ptrdiff_t>(raw.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(resolve_workers(cfg_.workers))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (u >= n_docs && !cfg_.query_entities) continue;
        guard.run([&] { entities[u] = provider.extract(raw[u]).words; });
    }
    guard.rethrow();
    for (const auto& e : entities) counters_.entity_words.fetch_add(e.size());

    auto streams = preprocess(raw);
    const auto variant =
        cfg_.pipeline == PipelineKind::Ecs1 ? EcsVariant::KeepOriginalOnly : EcsVariant::KeepOriginalAndStem;
    if (cfg_.base_stemmer == StemmerKind::LlmVocabulary) {
        const auto mapping = vocab_mapping(streams);
        for (std::size_t i = 0; i < streams.size(); ++i) {
            streams[i] = ecs_transform(streams[i], entities[i], mapping, variant, cfg_.first_stem_only);
        }
    } else {
        const auto fn = make_stem_fn(cfg_.base_stemmer, &dict_);
        for (std::size_t i = 0; i < streams.size(); ++i) {
            streams[i] = ecs_transform(streams[i], entities[i], fn, variant);
        }
    }
    return streams;
}

TransformedCollection PipelineRunner::run(const std::vector<RawDocument>& docs, const std::vector<Topic>& topics) {
    auto t0 = Clock::now();
    // Documents and queries go through one pass so a vocabulary stemmer sees
    // both sides. Queries are short and are not truncated.
    std::vector<RawDocument> raw;
    raw.reserve(docs.size() + topics.size());
    for (const auto& d : docs) raw.push_back({d.doc_id, truncate_text_first_p(d.text, cfg_.truncation_limit)});
    for (const auto& t : topics) raw.push_back({query_entity_key(t.query_id), t.text});
    timings_["truncate"] = ms_since(t0);

    t0 = Clock::now();
    std::vector<TokenStream> streams;
    switch (cfg_.pipeline) {
        case PipelineKind::None: streams = preprocess(raw); break;
        case PipelineKind::Porter: streams = run_vocab(preprocess(raw), StemmerKind::Porter); break;
        case PipelineKind::Dict: streams = run_vocab(preprocess(raw), StemmerKind::Dictionary); break;
        case PipelineKind::Vs: streams = run_vocab(preprocess(raw), StemmerKind::LlmVocabulary); break;
        case PipelineKind::Cs: streams = run_cs(raw); break;
        case PipelineKind::Ecs1:
        case PipelineKind::Ecs2: streams = run_ecs(raw, docs.size()); break;
    }
    timings_["transform"] = ms_since(t0);

    TransformedCollection out;
    out.docs.reserve(docs.size());
    out.queries.reserve(topics.size());
    for (std::size_t i = 0; i < docs.size(); ++i) out.docs.push_back({docs[i].doc_id, std::move(streams[i])});
    for (std::size_t i = 0; i < topics.size(); ++i) {
        out.queries.push_back({topics[i].query_id, std::move(streams[docs.size() + i])});
    }
    return out;
}

void PipelineRunner::flush() {
    if (stem_cache_ && !cfg_.stem_cache_path.empty()) stem_cache_->checkpoint();
    if (cfg_.pipeline == PipelineKind::Cs && !cfg_.cs_cache_path.empty()) cs_cache_.save(cfg_.cs_cache_path);
    if (is_ecs(cfg_.pipeline) && *cfg_.entity_provider != EntitySource::Cache && !cfg_.entity_cache_path.empty()) {
        entity_cache_.save(cfg_.entity_cache_path);
    }
}

// ---------------------------------------------------------------------------
// Retrieval and reporting

RunRanking retrieve(const InvertedIndex& idx, const Bm25Params& params,
                    const std::vector<IndexDocument>& queries, std::size_t k, int workers) {
    std::vector<TokenStream> qs;
    qs.reserve(queries.size());
    for (const auto& q : queries) qs.push_back(q.tokens);
    const auto results = search_all(idx, params, qs, k, workers);
    RunRanking run;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (results[i].empty()) continue;
        auto& out = run[queries[i].doc_id];
        for (const auto& r : results[i]) out.push_back({r.doc_id, r.score});
    }
    return run;
}

json report_to_json(const EvalReport& report) {
    json means = json::object();
    json per_query = json::object();
    for (auto m : kAllMetrics) means[std::string(to_string(m))] = report.mean(m);
    for (std::size_t i = 0; i < report.query_ids.size(); ++i) {
        json row = json::object();
        for (auto m : kAllMetrics) row[std::string(to_string(m))] = report.per_query[i][static_cast<std::size_t>(m)];
        per_query[report.query_ids[i]] = row;
    }
    return {{"queries", report.query_ids.size()}, {"means", means}, {"per_query", per_query}};
}

json comparisons_to_json(const std::vector<MetricComparison>& cmp, std::size_t m) {
    json rows = json::array();
    for (const auto& c : cmp) {
        rows.push_back({{"metric", std::string(to_string(c.metric))},
                        {"mean", c.mean_a},
                        {"reference_mean", c.mean_b},
                        {"t", c.test.t},
                        {"p", c.test.p},
                        {"p_bonferroni", c.p_adjusted},
                        {"significant", c.significant}});
    }
    return {{"bonferroni_m", m}, {"alpha", kSignificanceLevel}, {"metrics", rows}};
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

json counters_to_json(const PipelineCounters& c) {
    json events = json::array();
    for (const auto& e : c.events()) events.push_back({{"id", e.doc_id}, {"reason", e.reason}});
    return {
        {"vs_requests", c.vs_requests.load()},
        {"vs_terms_sent", c.vs_terms_sent.load()},
        {"vs_cache_hits", c.vs_cache_hits.load()},
        {"vs_skipped_lines", c.vs_skipped_lines.load()},
        {"vs_identity_fallbacks", c.vs_identity_fallbacks.load()},
        {"cs_requests", c.cs_requests.load()},
        {"cs_fallbacks", c.cs_fallbacks.load()},
        {"ecs_requests", c.ecs_requests.load()},
        {"ecs_errors", c.ecs_errors.load()},
        {"entity_cache_hits", c.entity_cache_hits.load()},
        {"entity_words", c.entity_words.load()},
        {"events", events},
    };
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto start = Clock::now();
    std::map<std::string, double> timings;

    auto t0 = Clock::now();
    const auto docs = load_corpus(cfg.corpus_path);
    const auto topics = load_topics(cfg.topics_path);
    std::optional<Qrels> qrels;
    if (!cfg.qrels_path.empty()) qrels = load_qrels(cfg.qrels_path);
    std::optional<RunRanking> reference;
    if (!cfg.reference_run.empty()) {
        if (!qrels) throw InvalidArgument("config: reference_run needs qrels");
        reference = read_run(cfg.reference_run);
    }
    timings["load"] = ms_since(t0);

    PipelineRunner runner(cfg);
    auto collection = runner.run(docs, topics);
    for (const auto& [stage, ms] : runner.timings()) timings[stage] = ms;

    t0 = Clock::now();
    const auto index = build_index(collection.docs, cfg.workers);
    timings["index"] = ms_since(t0);

    t0 = Clock::now();
    ExperimentResult result;
    result.run = retrieve(index, cfg.bm25, collection.queries, cfg.k, cfg.workers);
    timings["search"] = ms_since(t0);

    runner.flush();

    fs::create_directories(cfg.output_dir);
    const fs::path base = fs::path(cfg.output_dir) / cfg.run_tag;
    auto artifact = [&](const char* ext) { return base.string() + ext; };

    result.run_path = artifact(".run");
    write_run(result.run_path, result.run, cfg.run_tag);

    t0 = Clock::now();
    if (qrels) {
        result.report = evaluate(result.run, *qrels, {}, cfg.workers);
        json eval = report_to_json(*result.report);
        if (reference) {
            const auto ref_report = evaluate(*reference, *qrels, {}, cfg.workers);
            result.comparisons = compare_reports(*result.report, ref_report, cfg.bonferroni_m);
            eval["comparison"] = comparisons_to_json(result.comparisons, cfg.bonferroni_m);
            eval["comparison"]["reference_run"] = cfg.reference_run;
            const auto rows = gain_loss(result.report->column(cfg.gain_loss_metric),
                                        ref_report.column(cfg.gain_loss_metric));
            std::ostringstream csv;
            write_gain_loss_csv(csv, rows);
            write_text(artifact(".gainloss.csv"), csv.str());
        }
        write_text(artifact(".eval.json"), eval.dump(2) + "\n");
    }
    timings["evaluate"] = ms_since(t0);

    write_text(artifact(".config.json"), config_to_json(cfg).dump(2) + "\n");

    json counters = counters_to_json(runner.counters());
    counters["documents"] = docs.size();
    counters["queries"] = topics.size();
    counters["index_terms"] = index.term_count();
    write_text(artifact(".counters.json"), counters.dump(2) + "\n");

    json telemetry = {{"stages_ms", timings}, {"total_ms", ms_since(start)}};
    if (const auto* gw = runner.gateway()) {
        const auto s = gw->stats();
        telemetry["gateway"] = {{"requests", s.requests},
                                {"retries", s.retries},
                                {"failures", s.failures},
                                {"prompt_bytes", s.prompt_bytes},
                                {"response_bytes", s.response_bytes},
                                {"contacts_network", gw->contacts_network()}};
    }
    write_text(artifact(".telemetry.json"), telemetry.dump(2) + "\n");
    return result;
}

}  // namespace stemlab
