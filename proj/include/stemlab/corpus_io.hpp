#pragma once

#include <cstddef>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "stemlab/eval.hpp"
#include "stemlab/index.hpp"
#include "stemlab/llm.hpp"
#include "stemlab/stemmers.hpp"
#include "stemlab/text.hpp"

namespace stemlab {

/// Streams a JSON-lines corpus: one object per line with string "id" and
/// "contents". Blank lines are skipped. Malformed lines, ids containing
/// whitespace and repeated ids raise ParseError with the line number.
class CorpusReader {
public:
    explicit CorpusReader(const std::string& path);

    /// False at end of file.
    bool next(RawDocument& doc);
    std::size_t line() const { return line_; }

private:
    std::string path_;
    std::ifstream in_;
    std::size_t line_ = 0;
    std::unordered_set<std::string> seen_;
};

std::vector<RawDocument> load_corpus(const std::string& path);

/// Writes {"id", "contents"} lines.
void write_corpus(std::ostream& out, const std::vector<RawDocument>& docs);

struct Topic {
    std::string query_id;
    std::string text;
    bool operator==(const Topic&) const = default;
};

/// TSV "qid<TAB>text"; blank lines skipped; order preserved.
std::vector<Topic> load_topics(const std::string& path);

/// Whitespace-separated "qid 0 docid grade" lines.
Qrels load_qrels(const std::string& path);

/// TREC 6-column "qid Q0 docid rank score tag", 1-based ranks, score with 6
/// decimals. Queries in id order, documents in ranking order.
void write_run(std::ostream& out, const RunRanking& run, const std::string& tag);
void write_run(const std::string& path, const RunRanking& run, const std::string& tag);

/// Reads a run, ordering each query's documents by rank.
RunRanking read_run(const std::string& path);

/// Human-readable score with 6 decimals, as written in run files.
std::string format_score(double score);

// ---------------------------------------------------------------------------
// Experiment configuration

enum class PipelineKind { None, Porter, Dict, Vs, Cs, Ecs1, Ecs2 };

/// "none", "porter", "dict", "vs", "cs", "ecs1", "ecs2".
std::string_view to_string(PipelineKind kind);
PipelineKind parse_pipeline(std::string_view name);

enum class EntitySource { Rule, Llm, Cache };

std::string_view to_string(EntitySource s);
EntitySource parse_entity_source(std::string_view name);

struct ProviderSettings {
    /// "mock" or "http".
    std::string kind = "mock";
    /// Mock table file; optional when `mock_mode` is set.
    std::string mock_table;
    std::optional<MockProvider::RuleMode> mock_mode;
    ProviderConfig http;
};

struct ExperimentConfig {
    std::string corpus_path;
    std::string topics_path;
    std::string qrels_path;

    PipelineKind pipeline = PipelineKind::None;
    /// Vocabulary stemmer under ECS: porter, dict or llm.
    StemmerKind base_stemmer = StemmerKind::Porter;
    std::string dictionary_path;
    std::string stopwords_path;

    ProviderSettings provider;
    std::string samples_path;
    std::size_t vs_batch_size = kDefaultVsBatchSize;
    bool first_stem_only = false;
    std::string stem_cache_path;
    std::string cs_cache_path;

    std::optional<EntitySource> entity_provider;
    std::string entity_cache_path;
    bool query_entities = true;

    Bm25Params bm25;
    std::size_t k = 1000;
    std::size_t truncation_limit = kDefaultTruncation;

    std::string output_dir = "out";
    std::string run_tag = "run";

    std::string reference_run;
    Metric gain_loss_metric = Metric::MAP;
    std::size_t bonferroni_m = 1;

    int workers = 0;

    /// Throws InvalidArgument naming the missing or invalid field.
    void validate() const;
};

/// Unknown keys are rejected. Relative paths are kept as written.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

}  // namespace stemlab
