#include "stemlab/corpus_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "stemlab/error.hpp"

namespace stemlab {

using nlohmann::json;

namespace {

bool has_space(std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

void chomp(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string f;
    while (in >> f) out.push_back(f);
    return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && p == end;
}

std::ifstream open_or_throw(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw IoError(std::string("cannot open ") + what + ": " + path);
    return in;
}

}  // namespace

// ---------------------------------------------------------------------------
// Corpus

CorpusReader::CorpusReader(const std::string& path) : path_(path), in_(open_or_throw(path, "corpus")) {}

bool CorpusReader::next(RawDocument& doc) {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_;
        chomp(line);
        if (is_blank(line)) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw ParseError(path_, line_, "not a JSON object");
        auto id = j.find("id");
        auto contents = j.find("contents");
        if (id == j.end()) throw ParseError(path_, line_, "missing \"id\"");
        if (contents == j.end()) throw ParseError(path_, line_, "missing \"contents\"");
        if (id->is_number_integer()) {
            doc.doc_id = std::to_string(id->get<long long>());
        } else if (id->is_string()) {
            doc.doc_id = id->get<std::string>();
        } else {
            throw ParseError(path_, line_, "\"id\" must be a string");
        }
        if (!contents->is_string()) throw ParseError(path_, line_, "\"contents\" must be a string");
        if (doc.doc_id.empty() || has_space(doc.doc_id)) {
            throw ParseError(path_, line_, "document id must be non-empty without whitespace");
        }
        if (!seen_.insert(doc.doc_id).second) {
            throw ParseError(path_, line_, "duplicate document id " + doc.doc_id);
        }
        doc.text = contents->get<std::string>();
        return true;
    }
    return false;
}

std::vector<RawDocument> load_corpus(const std::string& path) {
    CorpusReader reader(path);
    std::vector<RawDocument> docs;
    RawDocument d;
    while (reader.next(d)) docs.push_back(std::move(d));
    return docs;
}

void write_corpus(std::ostream& out, const std::vector<RawDocument>& docs) {
    for (const auto& d : docs) {
        out << json{{"id", d.doc_id}, {"contents", d.text}}.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// Topics, qrels, runs

std::vector<Topic> load_topics(const std::string& path) {
    auto in = open_or_throw(path, "topics");
    std::vector<Topic> out;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        chomp(line);
        if (is_blank(line)) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError(path, lineno, "expected qid<TAB>text");
        std::string qid = line.substr(0, tab);
        if (qid.empty() || has_space(qid)) throw ParseError(path, lineno, "query id must be non-empty without whitespace");
        if (!seen.insert(qid).second) throw ParseError(path, lineno, "duplicate query id " + qid);
        out.push_back({std::move(qid), line.substr(tab + 1)});
    }
    return out;
}

Qrels load_qrels(const std::string& path) {
    auto in = open_or_throw(path, "qrels");
    Qrels qrels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        chomp(line);
        if (is_blank(line)) continue;
        const auto f = split_fields(line);
        if (f.size() != 4) throw ParseError(path, lineno, "expected 'qid iter docid grade'");
        int grade = 0;
        if (!parse_number(f[3], grade)) throw ParseError(path, lineno, "grade is not an integer: " + f[3]);
        if (grade < 0) throw ParseError(path, lineno, "negative grade " + f[3]);
        qrels.add(f[0], f[2], grade);
    }
    return qrels;
}

std::string format_score(double score) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", score);
    return buf;
}

void write_run(std::ostream& out, const RunRanking& run, const std::string& tag) {
    if (tag.empty() || has_space(tag)) throw InvalidArgument("run tag must be non-empty without whitespace");
    for (const auto& [qid, docs] : run) {
        for (std::size_t i = 0; i < docs.size(); ++i) {
            out << qid << " Q0 " << docs[i].doc_id << ' ' << (i + 1) << ' ' << format_score(docs[i].score)
                << ' ' << tag << '\n';
        }
    }
}

void write_run(const std::string& path, const RunRanking& run, const std::string& tag) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write run file: " + path);
    write_run(out, run, tag);
    if (!out) throw IoError("failed writing run file: " + path);
}

RunRanking read_run(const std::string& path) {
    auto in = open_or_throw(path, "run file");
    std::map<std::string, std::vector<std::pair<long, RankedDoc>>> rows;
    std::map<std::string, std::set<std::string>> seen_docs;
    std::map<std::string, std::set<long>> seen_ranks;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        chomp(line);
        if (is_blank(line)) continue;
        const auto f = split_fields(line);
        if (f.size() != 6) throw ParseError(path, lineno, "expected 'qid Q0 docid rank score tag'");
        long rank = 0;
        if (!parse_number(f[3], rank) || rank < 1) throw ParseError(path, lineno, "rank must be a positive integer");
        double score = 0.0;
        try {
            std::size_t used = 0;
            score = std::stod(f[4], &used);
            if (used != f[4].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ParseError(path, lineno, "score is not a number: " + f[4]);
        }
        if (!seen_docs[f[0]].insert(f[2]).second) {
            throw ParseError(path, lineno, "document " + f[2] + " repeated for query " + f[0]);
        }
        if (!seen_ranks[f[0]].insert(rank).second) {
            throw ParseError(path, lineno, "rank " + f[3] + " repeated for query " + f[0]);
        }
        rows[f[0]].push_back({rank, RankedDoc{f[2], score}});
    }
    RunRanking run;
    for (auto& [qid, list] : rows) {
        std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        auto& out = run[qid];
        out.reserve(list.size());
        for (auto& [_, d] : list) out.push_back(std::move(d));
    }
    return run;
}

// ---------------------------------------------------------------------------
// Configuration

std::string_view to_string(PipelineKind kind) {
    switch (kind) {
        case PipelineKind::None: return "none";
        case PipelineKind::Porter: return "porter";
        case PipelineKind::Dict: return "dict";
        case PipelineKind::Vs: return "vs";
        case PipelineKind::Cs: return "cs";
        case PipelineKind::Ecs1: return "ecs1";
        case PipelineKind::Ecs2: return "ecs2";
    }
    return "none";
}

PipelineKind parse_pipeline(std::string_view name) {
    for (auto k : {PipelineKind::None, PipelineKind::Porter, PipelineKind::Dict, PipelineKind::Vs,
                   PipelineKind::Cs, PipelineKind::Ecs1, PipelineKind::Ecs2}) {
        if (to_string(k) == name) return k;
    }
    throw InvalidArgument("unknown pipeline: " + std::string(name) +
                          " (expected none|porter|dict|vs|cs|ecs1|ecs2)");
}

std::string_view to_string(EntitySource s) {
    switch (s) {
        case EntitySource::Rule: return "rule";
        case EntitySource::Llm: return "llm";
        case EntitySource::Cache: return "cache";
    }
    return "rule";
}

EntitySource parse_entity_source(std::string_view name) {
    if (name == "rule") return EntitySource::Rule;
    if (name == "llm") return EntitySource::Llm;
    if (name == "cache") return EntitySource::Cache;
    throw InvalidArgument("unknown entity provider: " + std::string(name) + " (expected rule|llm|cache)");
}

void ExperimentConfig::validate() const {
    if (corpus_path.empty()) throw InvalidArgument("config: corpus is required");
    if (topics_path.empty()) throw InvalidArgument("config: topics is required");
    if (run_tag.empty() || has_space(run_tag)) throw InvalidArgument("config: run_tag must be non-empty without whitespace");
    if (output_dir.empty()) throw InvalidArgument("config: output_dir is required");
    if (k == 0) throw InvalidArgument("config: k must be >= 1");
    if (truncation_limit == 0) throw InvalidArgument("config: truncation_limit must be >= 1");
    if (vs_batch_size == 0) throw InvalidArgument("config: vs_batch_size must be >= 1");
    if (bonferroni_m == 0) throw InvalidArgument("config: bonferroni_m must be >= 1");
    bm25.validate();

    const bool ecs = pipeline == PipelineKind::Ecs1 || pipeline == PipelineKind::Ecs2;
    if (ecs) {
        if (!entity_provider) throw InvalidArgument("config: ECS pipelines require entity_provider");
        if (*entity_provider == EntitySource::Cache && entity_cache_path.empty()) {
            throw InvalidArgument("config: entity_provider 'cache' requires entity_cache");
        }
        if (base_stemmer == StemmerKind::NoStem) throw InvalidArgument("config: ECS base_stemmer must be porter, dict or llm");
    }
    const bool needs_dict = pipeline == PipelineKind::Dict || (ecs && base_stemmer == StemmerKind::Dictionary);
    if (needs_dict && dictionary_path.empty()) throw InvalidArgument("config: dictionary is required");

    const bool needs_llm = pipeline == PipelineKind::Vs || pipeline == PipelineKind::Cs ||
                           (ecs && (base_stemmer == StemmerKind::LlmVocabulary ||
                                    *entity_provider == EntitySource::Llm));
    if (needs_llm) {
        if (provider.kind == "mock") {
            if (provider.mock_table.empty() && !provider.mock_mode) {
                throw InvalidArgument("config: mock provider needs mock_table or mock_mode");
            }
        } else if (provider.kind == "http") {
            provider.http.validate();
        } else {
            throw InvalidArgument("config: provider.kind must be mock or http");
        }
    }
}

namespace {

template <typename T>
void take(const json& obj, const char* key, T& out) {
    if (auto it = obj.find(key); it != obj.end() && !it->is_null()) out = it->get<T>();
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const char* where) {
    for (const auto& [key, _] : obj.items()) {
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
            throw InvalidArgument(std::string("config: unknown key '") + key + "' in " + where);
        }
    }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw InvalidArgument("config: top level must be an object");
    reject_unknown(j,
                   {"corpus", "topics", "qrels", "pipeline", "base_stemmer", "dictionary", "stopwords",
                    "provider", "samples", "vs_batch_size", "first_stem_only", "stem_cache", "cs_cache",
                    "entity_provider", "entity_cache", "query_entities", "bm25", "k", "truncation_limit",
                    "output_dir", "run_tag", "reference_run", "gain_loss_metric", "bonferroni_m", "workers"},
                   "config");
    ExperimentConfig c;
    try {
        take(j, "corpus", c.corpus_path);
        take(j, "topics", c.topics_path);
        take(j, "qrels", c.qrels_path);
        if (j.contains("pipeline")) c.pipeline = parse_pipeline(j.at("pipeline").get<std::string>());
        if (j.contains("base_stemmer")) c.base_stemmer = parse_stemmer_kind(j.at("base_stemmer").get<std::string>());
        take(j, "dictionary", c.dictionary_path);
        take(j, "stopwords", c.stopwords_path);
        if (auto p = j.find("provider"); p != j.end()) {
            reject_unknown(*p,
                           {"kind", "mock_table", "mock_mode", "endpoint_url", "model", "api_key_env",
                            "max_retries", "backoff_ms", "max_concurrent_requests", "request_timeout_ms",
                            "decode"},
                           "provider");
            take(*p, "kind", c.provider.kind);
            take(*p, "mock_table", c.provider.mock_table);
            if (p->contains("mock_mode") && !p->at("mock_mode").is_null()) c.provider.mock_mode = parse_rule_mode(p->at("mock_mode").get<std::string>());
            take(*p, "endpoint_url", c.provider.http.endpoint_url);
            take(*p, "model", c.provider.http.model_name);
            take(*p, "api_key_env", c.provider.http.api_key_env);
            take(*p, "max_retries", c.provider.http.max_retries);
            take(*p, "max_concurrent_requests", c.provider.http.max_concurrent_requests);
            if (p->contains("backoff_ms")) c.provider.http.backoff_base = std::chrono::milliseconds(p->at("backoff_ms").get<long>());
            if (p->contains("request_timeout_ms")) {
                c.provider.http.request_timeout = std::chrono::milliseconds(p->at("request_timeout_ms").get<long>());
            }
            if (p->contains("decode")) c.provider.http.profile = parse_decode_profile(p->at("decode").get<std::string>());
        }
        take(j, "samples", c.samples_path);
        take(j, "vs_batch_size", c.vs_batch_size);
        take(j, "first_stem_only", c.first_stem_only);
        take(j, "stem_cache", c.stem_cache_path);
        take(j, "cs_cache", c.cs_cache_path);
        if (j.contains("entity_provider") && !j.at("entity_provider").is_null()) {
            c.entity_provider = parse_entity_source(j.at("entity_provider").get<std::string>());
        }
        take(j, "entity_cache", c.entity_cache_path);
        take(j, "query_entities", c.query_entities);
        if (auto b = j.find("bm25"); b != j.end()) {
            reject_unknown(*b, {"k1", "b"}, "bm25");
            take(*b, "k1", c.bm25.k1);
            take(*b, "b", c.bm25.b);
        }
        take(j, "k", c.k);
        take(j, "truncation_limit", c.truncation_limit);
        take(j, "output_dir", c.output_dir);
        take(j, "run_tag", c.run_tag);
        take(j, "reference_run", c.reference_run);
        if (j.contains("gain_loss_metric")) c.gain_loss_metric = parse_metric(j.at("gain_loss_metric").get<std::string>());
        take(j, "bonferroni_m", c.bonferroni_m);
        take(j, "workers", c.workers);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json provider = {
        {"kind", c.provider.kind},
        {"mock_table", c.provider.mock_table},
        {"mock_mode", c.provider.mock_mode ? json(std::string(to_string(*c.provider.mock_mode))) : json(nullptr)},
        {"endpoint_url", c.provider.http.endpoint_url},
        {"model", c.provider.http.model_name},
        {"api_key_env", c.provider.http.api_key_env},
        {"max_retries", c.provider.http.max_retries},
        {"backoff_ms", c.provider.http.backoff_base.count()},
        {"max_concurrent_requests", c.provider.http.max_concurrent_requests},
        {"request_timeout_ms", c.provider.http.request_timeout.count()},
        {"decode", std::string(to_string(c.provider.http.profile))},
    };
    return {
        {"corpus", c.corpus_path},
        {"topics", c.topics_path},
        {"qrels", c.qrels_path},
        {"pipeline", std::string(to_string(c.pipeline))},
        {"base_stemmer", std::string(to_string(c.base_stemmer))},
        {"dictionary", c.dictionary_path},
        {"stopwords", c.stopwords_path},
        {"provider", provider},
        {"samples", c.samples_path},
        {"vs_batch_size", c.vs_batch_size},
        {"first_stem_only", c.first_stem_only},
        {"stem_cache", c.stem_cache_path},
        {"cs_cache", c.cs_cache_path},
        {"entity_provider", c.entity_provider ? json(std::string(to_string(*c.entity_provider))) : json(nullptr)},
        {"entity_cache", c.entity_cache_path},
        {"query_entities", c.query_entities},
        {"bm25", {{"k1", c.bm25.k1}, {"b", c.bm25.b}}},
        {"k", c.k},
        {"truncation_limit", c.truncation_limit},
        {"output_dir", c.output_dir},
        {"run_tag", c.run_tag},
        {"reference_run", c.reference_run},
        {"gain_loss_metric", std::string(to_string(c.gain_loss_metric))},
        {"bonferroni_m", c.bonferroni_m},
        {"workers", c.workers},
    };
}

ExperimentConfig load_config(const std::string& path) {
    auto in = open_or_throw(path, "config");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError(path, 0, "config is not valid JSON");
    return config_from_json(j);
}

}  // namespace stemlab
