#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stemlab/corpus_io.hpp"
#include "stemlab/eval.hpp"
#include "stemlab/index.hpp"
#include "stemlab/llm.hpp"
#include "stemlab/pipelines.hpp"

namespace stemlab {

/// Gateway for the configured provider. Mock tables and rule modes never
/// touch the network.
std::unique_ptr<LlmGateway> make_gateway(const ProviderSettings& settings);

/// doc_id -> contextual-stemming output, so warm CS runs need no requests.
/// File: "doc_id<TAB>token token ..." sorted by id.
class TokenCache {
public:
    std::optional<TokenStream> find(const std::string& id) const;
    void put(const std::string& id, TokenStream tokens);
    std::size_t size() const;
    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    mutable std::mutex mu_;
    std::map<std::string, TokenStream> entries_;
};

/// Stopword-filtered, truncated and transformed streams ready for indexing.
struct TransformedCollection {
    std::vector<IndexDocument> docs;
    /// doc_id holds the query id.
    std::vector<IndexDocument> queries;
};

/// Applies the configured pipeline to documents and queries. Owns the
/// gateway and caches; caches are persisted by flush().
class PipelineRunner {
public:
    explicit PipelineRunner(const ExperimentConfig& cfg);
    ~PipelineRunner();

    TransformedCollection run(const std::vector<RawDocument>& docs, const std::vector<Topic>& topics);

    /// Writes every cache that has a configured path.
    void flush();

    const PipelineCounters& counters() const { return counters_; }
    /// Null when the pipeline needs no LLM.
    const LlmGateway* gateway() const { return gateway_.get(); }
    /// Stage name -> wall-clock milliseconds.
    const std::map<std::string, double>& timings() const { return timings_; }

private:
    std::vector<TokenStream> preprocess(const std::vector<RawDocument>& raw) const;
    std::vector<TokenStream> run_vocab(std::vector<TokenStream> streams, StemmerKind kind);
    std::vector<TokenStream> run_cs(const std::vector<RawDocument>& raw);
    std::vector<TokenStream> run_ecs(const std::vector<RawDocument>& raw, std::size_t n_docs);
    StemMapping vocab_mapping(std::span<const TokenStream> streams);
    LlmGateway& need_gateway();

    ExperimentConfig cfg_;
    OneShotSamples samples_;
    StopwordSet stopwords_;
    StemDictionary dict_;
    PipelineCounters counters_;
    std::unique_ptr<LlmGateway> gateway_;
    std::unique_ptr<StemCache> stem_cache_;
    TokenCache cs_cache_;
    EntityCache entity_cache_;
    std::map<std::string, double> timings_;
};

/// Entity-cache key of a query, kept apart from document ids.
std::string query_entity_key(const std::string& query_id);

/// Top-k per query, assembled into a run (queries with no hits are absent).
RunRanking retrieve(const InvertedIndex& idx, const Bm25Params& params,
                    const std::vector<IndexDocument>& queries, std::size_t k, int workers = 0);

nlohmann::json report_to_json(const EvalReport& report);
nlohmann::json comparisons_to_json(const std::vector<MetricComparison>& cmp, std::size_t m);

struct ExperimentResult {
    RunRanking run;
    std::optional<EvalReport> report;
    std::vector<MetricComparison> comparisons;
    std::string run_path;
};

/// End to end: transform, index, retrieve, evaluate, write artifacts
/// "<tag>.run", "<tag>.eval.json", "<tag>.config.json", "<tag>.counters.json",
/// "<tag>.telemetry.json" and, against a reference run, "<tag>.gainloss.csv".
/// Everything except the telemetry file is deterministic.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace stemlab
