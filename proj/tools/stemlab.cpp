// stemlab command-line tool.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 provider error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stemlab/corpus_io.hpp"
#include "stemlab/error.hpp"
#include "stemlab/experiment.hpp"

using namespace stemlab;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitProvider = 3;

// Flags shared by the commands that build an ExperimentConfig. Unset flags
// leave the config file's value in place.
struct Overrides {
    std::string config;
    std::optional<std::string> corpus, topics, qrels, pipeline, base_stemmer, dictionary, stopwords;
    std::optional<std::string> provider, mock_table, mock_mode, endpoint, model, api_key_env, decode;
    std::optional<std::string> samples, stem_cache, cs_cache, entity_provider, entity_cache;
    std::optional<std::string> output_dir, run_tag, reference_run, gain_loss_metric;
    std::optional<std::size_t> vs_batch_size, k, truncation, bonferroni_m;
    std::optional<double> k1, b;
    std::optional<int> workers;
    bool first_stem_only = false;
    bool no_query_entities = false;
};

void add_pipeline_flags(CLI::App& app, Overrides& o) {
    app.add_option("--config", o.config, "JSON experiment config");
    app.add_option("--corpus", o.corpus, "JSON-lines corpus (id, contents)");
    app.add_option("--topics", o.topics, "TSV topics (qid<TAB>text)");
    app.add_option("--pipeline", o.pipeline, "none|porter|dict|vs|cs|ecs1|ecs2");
    app.add_option("--base-stemmer", o.base_stemmer, "ECS vocabulary stemmer: porter|dict|llm");
    app.add_option("--dictionary", o.dictionary, "word<TAB>root dictionary for dict");
    app.add_option("--stopwords", o.stopwords, "stopword list, one per line");
    app.add_option("--truncation", o.truncation, "FirstP token limit");
    app.add_option("--provider", o.provider, "mock|http")->check(CLI::IsMember({"mock", "http"}));
    app.add_option("--mock-table", o.mock_table, "mock provider response table");
    app.add_option("--mock-mode", o.mock_mode, "mock rule mode: identity|porter|none");
    app.add_option("--endpoint", o.endpoint, "chat-completions URL");
    app.add_option("--model", o.model, "model name");
    app.add_option("--api-key-env", o.api_key_env, "environment variable holding the API key");
    app.add_option("--decode", o.decode, "decoding profile: remote|local");
    app.add_option("--samples", o.samples, "one-shot samples JSON");
    app.add_option("--vs-batch-size", o.vs_batch_size, "terms per VS request");
    app.add_flag("--first-stem-only", o.first_stem_only, "keep only the first VS stem per word");
    app.add_option("--stem-cache", o.stem_cache, "VS stem cache TSV");
    app.add_option("--cs-cache", o.cs_cache, "CS output cache TSV");
    app.add_option("--entity-provider", o.entity_provider, "rule|llm|cache");
    app.add_option("--entity-cache", o.entity_cache, "entity cache TSV");
    app.add_flag("--no-query-entities", o.no_query_entities, "stem queries without entity protection");
    app.add_option("--workers", o.workers, "worker threads (0 = all cores)");
}

void add_retrieval_flags(CLI::App& app, Overrides& o) {
    app.add_option("--qrels", o.qrels, "relevance judgments");
    app.add_option("--k", o.k, "results per query");
    app.add_option("--k1", o.k1, "BM25 k1");
    app.add_option("--b", o.b, "BM25 b");
    app.add_option("--output-dir", o.output_dir, "artifact directory");
    app.add_option("--run-tag", o.run_tag, "run tag and artifact basename");
    app.add_option("--reference-run", o.reference_run, "run to compare against");
    app.add_option("--gain-loss-metric", o.gain_loss_metric, "rr|map|ndcg10|r1000");
    app.add_option("--bonferroni-m", o.bonferroni_m, "number of comparisons for Bonferroni");
}

template <typename T, typename U>
void set(const std::optional<T>& v, U& dst) {
    if (v) dst = *v;
}

ExperimentConfig resolve(const Overrides& o) {
    ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    set(o.corpus, c.corpus_path);
    set(o.topics, c.topics_path);
    set(o.qrels, c.qrels_path);
    if (o.pipeline) c.pipeline = parse_pipeline(*o.pipeline);
    if (o.base_stemmer) c.base_stemmer = parse_stemmer_kind(*o.base_stemmer);
    set(o.dictionary, c.dictionary_path);
    set(o.stopwords, c.stopwords_path);
    set(o.truncation, c.truncation_limit);
    set(o.provider, c.provider.kind);
    set(o.mock_table, c.provider.mock_table);
    if (o.mock_mode) c.provider.mock_mode = parse_rule_mode(*o.mock_mode);
    set(o.endpoint, c.provider.http.endpoint_url);
    set(o.model, c.provider.http.model_name);
    set(o.api_key_env, c.provider.http.api_key_env);
    if (o.decode) c.provider.http.profile = parse_decode_profile(*o.decode);
    set(o.samples, c.samples_path);
    set(o.vs_batch_size, c.vs_batch_size);
    if (o.first_stem_only) c.first_stem_only = true;
    set(o.stem_cache, c.stem_cache_path);
    set(o.cs_cache, c.cs_cache_path);
    if (o.entity_provider) c.entity_provider = parse_entity_source(*o.entity_provider);
    set(o.entity_cache, c.entity_cache_path);
    if (o.no_query_entities) c.query_entities = false;
    set(o.k, c.k);
    set(o.k1, c.bm25.k1);
    set(o.b, c.bm25.b);
    set(o.output_dir, c.output_dir);
    set(o.run_tag, c.run_tag);
    set(o.reference_run, c.reference_run);
    if (o.gain_loss_metric) c.gain_loss_metric = parse_metric(*o.gain_loss_metric);
    set(o.bonferroni_m, c.bonferroni_m);
    set(o.workers, c.workers);
    return c;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    return out;
}

void print_means(const EvalReport& report) {
    for (auto m : kAllMetrics) std::printf("%-7s %.4f\n", std::string(to_string(m)).c_str(), report.mean(m));
}

void print_comparisons(const std::vector<MetricComparison>& rows) {
    std::printf("%-7s %9s %9s %9s %9s %9s\n", "metric", "run_a", "run_b", "t", "p", "p_adj");
    for (const auto& r : rows) {
        std::printf("%-7s %9.4f %9.4f %9.4f %9.4f %9.4f%s\n", std::string(to_string(r.metric)).c_str(), r.mean_a,
                    r.mean_b, r.test.t, r.test.p, r.p_adjusted, r.significant ? " *" : "");
    }
}

// --- commands ---------------------------------------------------------------

struct StemVocabArgs {
    std::string stemmer = "porter";
    std::string out;
};

int cmd_stem_vocab(const Overrides& o, const StemVocabArgs& a) {
    ExperimentConfig c = resolve(o);
    const auto kind = parse_stemmer_kind(a.stemmer);
    // Reuse the pipeline runner: vocabulary stemming over corpus and topics.
    c.pipeline = kind == StemmerKind::LlmVocabulary ? PipelineKind::Vs
                 : kind == StemmerKind::Dictionary  ? PipelineKind::Dict
                 : kind == StemmerKind::Porter      ? PipelineKind::Porter
                                                    : PipelineKind::None;
    if (c.topics_path.empty()) throw InvalidArgument("stem-vocab needs --topics (use an empty file for none)");
    const auto docs = load_corpus(c.corpus_path);
    const auto topics = load_topics(c.topics_path);

    PipelineRunner runner(c);
    std::vector<RawDocument> raw;
    for (const auto& d : docs) raw.push_back({d.doc_id, truncate_text_first_p(d.text, c.truncation_limit)});
    std::vector<TokenStream> streams;
    for (const auto& d : raw) streams.push_back(tokenize(d.text));
    for (const auto& t : topics) streams.push_back(tokenize(t.text));
    const auto vocab = build_vocabulary(streams);

    StemCache table;
    if (kind == StemmerKind::LlmVocabulary) {
        // Single-word streams make apply_mapping() expose the full stem list.
        std::vector<RawDocument> words;
        for (const auto& w : vocab) words.push_back({w, w});
        const auto out = runner.run(words, {});
        for (std::size_t i = 0; i < vocab.size(); ++i) {
            const auto& stems = out.docs[i].tokens;
            table.put(vocab[i], stems.empty() ? TokenStream{vocab[i]} : stems);
        }
    } else {
        const StemDictionary dict = c.dictionary_path.empty() ? StemDictionary{} : StemDictionary::load(c.dictionary_path);
        const auto fn = make_stem_fn(kind, &dict);
        for (const auto& w : vocab) table.put(w, {fn(w)});
    }
    runner.flush();
    if (a.out.empty()) {
        for (const auto& [w, stems] : table.entries()) std::printf("%s\t%s\n", w.c_str(), join_tokens(stems).c_str());
    } else {
        table.save(a.out);
    }
    std::fprintf(stderr, "stemmed %zu vocabulary words\n", vocab.size());
    return 0;
}

struct TransformArgs {
    std::string out;
    std::string topics_out;
};

int cmd_transform(const Overrides& o, const TransformArgs& a) {
    const ExperimentConfig c = resolve(o);
    const auto docs = load_corpus(c.corpus_path);
    const auto topics = c.topics_path.empty() ? std::vector<Topic>{} : load_topics(c.topics_path);
    PipelineRunner runner(c);
    const auto coll = runner.run(docs, topics);
    runner.flush();

    std::vector<RawDocument> out_docs;
    for (const auto& d : coll.docs) out_docs.push_back({d.doc_id, join_tokens(d.tokens)});
    if (a.out.empty()) {
        write_corpus(std::cout, out_docs);
    } else {
        auto f = open_out(a.out);
        write_corpus(f, out_docs);
    }
    if (!a.topics_out.empty()) {
        auto f = open_out(a.topics_out);
        for (const auto& q : coll.queries) f << q.doc_id << '\t' << join_tokens(q.tokens) << '\n';
    }
    return 0;
}

struct IndexArgs {
    std::string corpus;
    std::string out;
    int workers = 0;
};

int cmd_index(const IndexArgs& a) {
    std::vector<IndexDocument> docs;
    CorpusReader reader(a.corpus);
    RawDocument d;
    while (reader.next(d)) docs.push_back({d.doc_id, tokenize(d.text)});
    const auto idx = build_index(docs, a.workers);
    idx.save(a.out);
    std::fprintf(stderr, "indexed %zu documents, %zu terms\n", idx.doc_count(), idx.term_count());
    return 0;
}

struct SearchArgs {
    std::string index;
    std::string topics;
    std::string out;
    std::string tag = "run";
    std::size_t k = 1000;
    double k1 = 0.9;
    double b = 0.4;
    int workers = 0;
};

int cmd_search(const SearchArgs& a) {
    const auto idx = InvertedIndex::load(a.index);
    std::vector<IndexDocument> queries;
    for (const auto& t : load_topics(a.topics)) queries.push_back({t.query_id, tokenize(t.text)});
    const Bm25Params params{a.k1, a.b};
    params.validate();
    if (a.k == 0) throw InvalidArgument("--k must be >= 1");
    const auto run = retrieve(idx, params, queries, a.k, a.workers);
    if (a.out.empty()) {
        write_run(std::cout, run, a.tag);
    } else {
        write_run(a.out, run, a.tag);
    }
    return 0;
}

struct EvaluateArgs {
    std::string run;
    std::string qrels;
    std::string json_out;
    int workers = 0;
};

int cmd_evaluate(const EvaluateArgs& a) {
    const auto qrels = load_qrels(a.qrels);
    const auto run = read_run(a.run);
    const auto report = evaluate(run, qrels, {}, a.workers);
    print_means(report);
    if (!a.json_out.empty()) open_out(a.json_out) << report_to_json(report).dump(2) << '\n';
    return 0;
}

struct CompareArgs {
    std::string run_a;
    std::string run_b;
    std::string qrels;
    std::string metric = "map";
    std::size_t m = 1;
    std::string gain_loss_out;
};

int cmd_compare(const CompareArgs& a) {
    const auto qrels = load_qrels(a.qrels);
    const auto ra = read_run(a.run_a);
    const auto rb = read_run(a.run_b);
    const auto metric = parse_metric(a.metric);
    if (a.m == 0) throw InvalidArgument("--m must be >= 1");
    for (const auto& [qid, _] : ra) {
        if (!rb.contains(qid)) throw ConflictError("runs cover different queries: " + qid + " only in run A");
    }
    for (const auto& [qid, _] : rb) {
        if (!ra.contains(qid)) throw ConflictError("runs cover different queries: " + qid + " only in run B");
    }
    const auto ea = evaluate(ra, qrels);
    const auto eb = evaluate(rb, qrels);
    const auto rows = compare_reports(ea, eb, a.m);
    print_comparisons(rows);
    const auto gl = gain_loss(ea.column(metric), eb.column(metric));
    if (a.gain_loss_out.empty()) {
        write_gain_loss_csv(std::cout, gl);
    } else {
        auto f = open_out(a.gain_loss_out);
        write_gain_loss_csv(f, gl);
    }
    return 0;
}

int cmd_experiment(const Overrides& o) {
    const ExperimentConfig c = resolve(o);
    const auto result = run_experiment(c);
    std::fprintf(stderr, "wrote %s\n", result.run_path.c_str());
    if (result.report) print_means(*result.report);
    if (!result.comparisons.empty()) print_comparisons(result.comparisons);
    return 0;
}

int exit_code(const Error& e) {
    switch (e.category()) {
        case Error::Category::Usage: return kExitUsage;
        case Error::Category::Data: return kExitData;
        case Error::Category::Provider: return kExitProvider;
    }
    return kExitData;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stemming experiments for lexical retrieval"};
    app.require_subcommand(1);

    Overrides sv_o, tr_o, ex_o;
    StemVocabArgs sv;
    auto* stem_vocab = app.add_subcommand("stem-vocab", "Stem the corpus vocabulary into a word<TAB>stems table");
    add_pipeline_flags(*stem_vocab, sv_o);
    stem_vocab->add_option("--stemmer", sv.stemmer, "none|porter|dict|llm");
    stem_vocab->add_option("--out", sv.out, "output TSV (stdout when omitted)");

    TransformArgs tr;
    auto* transform = app.add_subcommand("transform", "Apply a pipeline and write the transformed corpus");
    add_pipeline_flags(*transform, tr_o);
    transform->add_option("--out", tr.out, "output JSON-lines file (stdout when omitted)");
    transform->add_option("--topics-out", tr.topics_out, "transformed topics TSV");

    IndexArgs ix;
    auto* index = app.add_subcommand("index", "Tokenize a corpus and write an index snapshot");
    index->add_option("--corpus", ix.corpus, "JSON-lines corpus")->required();
    index->add_option("--out", ix.out, "index file")->required();
    index->add_option("--workers", ix.workers, "worker threads (0 = all cores)");

    SearchArgs se;
    auto* search = app.add_subcommand("search", "BM25 top-k retrieval for a topic file");
    search->add_option("--index", se.index, "index file")->required();
    search->add_option("--topics", se.topics, "TSV topics")->required();
    search->add_option("--out", se.out, "run file (stdout when omitted)");
    search->add_option("--tag", se.tag, "run tag");
    search->add_option("--k", se.k, "results per query");
    search->add_option("--k1", se.k1, "BM25 k1");
    search->add_option("--b", se.b, "BM25 b");
    search->add_option("--workers", se.workers, "worker threads (0 = all cores)");

    EvaluateArgs ev;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a run against qrels");
    evaluate_cmd->add_option("--run", ev.run, "run file")->required();
    evaluate_cmd->add_option("--qrels", ev.qrels, "qrels file")->required();
    evaluate_cmd->add_option("--json", ev.json_out, "per-query report as JSON");
    evaluate_cmd->add_option("--workers", ev.workers, "worker threads (0 = all cores)");

    CompareArgs cm;
    auto* compare = app.add_subcommand("compare", "Paired t-test and gain-loss of run A against run B");
    compare->add_option("--run-a", cm.run_a, "system run")->required();
    compare->add_option("--run-b", cm.run_b, "reference run")->required();
    compare->add_option("--qrels", cm.qrels, "qrels file")->required();
    compare->add_option("--metric", cm.metric, "gain-loss metric: rr|map|ndcg10|r1000");
    compare->add_option("--m", cm.m, "Bonferroni comparison count");
    compare->add_option("--gain-loss", cm.gain_loss_out, "gain-loss CSV (stdout when omitted)");

    auto* experiment = app.add_subcommand("experiment", "Transform, index, search and evaluate in one go");
    add_pipeline_flags(*experiment, ex_o);
    add_retrieval_flags(*experiment, ex_o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*stem_vocab) return cmd_stem_vocab(sv_o, sv);
        if (*transform) return cmd_transform(tr_o, tr);
        if (*index) return cmd_index(ix);
        if (*search) return cmd_search(se);
        if (*evaluate_cmd) return cmd_evaluate(ev);
        if (*compare) return cmd_compare(cm);
        if (*experiment) return cmd_experiment(ex_o);
    } catch (const Error& e) {
        std::fprintf(stderr, "stemlab: %s\n", e.what());
        return exit_code(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "stemlab: %s\n", e.what());
        return kExitData;
    }
    return kExitUsage;
}
