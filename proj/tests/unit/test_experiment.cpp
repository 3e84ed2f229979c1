#include <gtest/gtest.h>

#include <algorithm>
#include <json.hpp>

#include "stemlab/experiment.hpp"
#include "stemlab/error.hpp"
#include "test_support.hpp"

using namespace stemlab;
using testsupport::read_file;
using testsupport::TempDir;

namespace {

std::string toy(const std::string& name) { return (testsupport::toy_dir() / name).string(); }

ExperimentConfig toy_config(PipelineKind kind, const TempDir& dir, const std::string& sub = "out") {
    ExperimentConfig c;
    c.corpus_path = toy("corpus.jsonl");
    c.topics_path = toy("topics.tsv");
    c.qrels_path = toy("qrels.txt");
    c.pipeline = kind;
    c.dictionary_path = toy("dictionary.tsv");
    c.output_dir = dir.file(sub);
    c.run_tag = "toy";
    c.workers = 4;
    return c;
}

std::string run_file(const ExperimentConfig& c) { return read_file(run_experiment(c).run_path); }

}  // namespace

TEST(Experiment, VsIdentityMatchesNoStem) {
    TempDir dir;
    auto vs = toy_config(PipelineKind::Vs, dir, "vs");
    vs.provider.mock_table = toy("mock_identity.tsv");
    const auto none = run_file(toy_config(PipelineKind::None, dir, "none"));
    ASSERT_FALSE(none.empty());
    EXPECT_EQ(run_file(vs), none);
}

TEST(Experiment, VsPorterMatchesClassicPorter) {
    TempDir dir;
    auto vs = toy_config(PipelineKind::Vs, dir, "vs");
    vs.provider.mock_mode = MockProvider::RuleMode::Porter;
    vs.vs_batch_size = 7;
    EXPECT_EQ(run_file(vs), run_file(toy_config(PipelineKind::Porter, dir, "porter")));
}

TEST(Experiment, EcsWithoutEntitiesMatchesPorter) {
    TempDir dir;
    const auto porter = run_file(toy_config(PipelineKind::Porter, dir, "porter"));
    for (auto kind : {PipelineKind::Ecs1, PipelineKind::Ecs2}) {
        auto c = toy_config(kind, dir, std::string(to_string(kind)));
        c.entity_provider = EntitySource::Cache;
        c.entity_cache_path = toy("entities_empty.tsv");
        EXPECT_EQ(run_file(c), porter) << to_string(kind);
    }
}

TEST(Experiment, PorterBeatsNoStemOnToyNdcg) {
    TempDir dir;
    const auto none = run_experiment(toy_config(PipelineKind::None, dir, "none"));
    const auto porter = run_experiment(toy_config(PipelineKind::Porter, dir, "porter"));
    ASSERT_TRUE(none.report && porter.report);
    EXPECT_GT(porter.report->mean(Metric::NDCG10), none.report->mean(Metric::NDCG10));
}

TEST(Experiment, ArtifactsAndDeterminism) {
    TempDir dir;
    auto ref = toy_config(PipelineKind::None, dir, "ref");
    const auto ref_path = run_experiment(ref).run_path;

    auto c = toy_config(PipelineKind::Dict, dir, "a");
    c.reference_run = ref_path;
    c.bonferroni_m = 3;
    const auto first = run_experiment(c);
    EXPECT_EQ(first.comparisons.size(), kAllMetrics.size());
    std::map<std::string, std::string> snapshot;
    for (const auto* ext : {".run", ".eval.json", ".gainloss.csv", ".config.json", ".counters.json"}) {
        const auto p = dir.file("a/toy") + ext;
        ASSERT_TRUE(std::filesystem::exists(p)) << ext;
        snapshot[ext] = read_file(p);
    }
    ASSERT_TRUE(std::filesystem::exists(dir.file("a/toy.telemetry.json")));
    run_experiment(c);
    for (const auto& [ext, text] : snapshot) EXPECT_EQ(read_file(dir.file("a/toy") + ext), text) << ext;

    const auto eval = nlohmann::json::parse(snapshot[".eval.json"]);
    EXPECT_EQ(eval["queries"], 10);
    EXPECT_TRUE(eval["comparison"].is_object());
    const auto cfg_back = config_from_json(nlohmann::json::parse(snapshot[".config.json"]));
    EXPECT_EQ(config_to_json(cfg_back), config_to_json(c));

    // Worker count does not change any deterministic artifact.
    c.workers = 1;
    run_experiment(c);
    for (const auto& [ext, text] : snapshot) {
        if (std::string(ext) != ".config.json") EXPECT_EQ(read_file(dir.file("a/toy") + ext), text) << ext;
    }
}

TEST(Experiment, ReferenceRunNeedsQrels) {
    TempDir dir;
    auto c = toy_config(PipelineKind::None, dir);
    c.qrels_path.clear();
    c.reference_run = "x.run";
    EXPECT_THROW(run_experiment(c), InvalidArgument);
}

TEST(Experiment, MissingInputsAreDataErrors) {
    TempDir dir;
    auto c = toy_config(PipelineKind::None, dir);
    c.corpus_path = dir.file("absent.jsonl");
    EXPECT_THROW(run_experiment(c), IoError);
}

TEST(Experiment, MockProviderNeverContactsNetwork) {
    TempDir dir;
    auto c = toy_config(PipelineKind::Vs, dir);
    c.provider.mock_mode = MockProvider::RuleMode::Porter;
    auto gw = make_gateway(c.provider);
    EXPECT_FALSE(gw->contacts_network());
    run_experiment(c);
    const auto tele = nlohmann::json::parse(read_file(dir.file("out/toy.telemetry.json")));
    EXPECT_FALSE(tele["gateway"]["contacts_network"].get<bool>());
    EXPECT_GT(tele["gateway"]["requests"].get<int>(), 0);
}

TEST(Experiment, WarmStemCacheSendsNoRequests) {
    TempDir dir;
    auto c = toy_config(PipelineKind::Vs, dir);
    c.provider.mock_mode = MockProvider::RuleMode::Porter;
    c.stem_cache_path = dir.file("stem.tsv");
    const auto cold = run_file(c);
    ASSERT_TRUE(std::filesystem::exists(c.stem_cache_path));
    const auto warm = run_file(c);
    EXPECT_EQ(warm, cold);
    const auto counters = nlohmann::json::parse(read_file(dir.file("out/toy.counters.json")));
    EXPECT_EQ(counters["vs_requests"], 0);
    EXPECT_GT(counters["vs_cache_hits"].get<int>(), 0);
}

TEST(Experiment, ContextualStemmingAndCache) {
    TempDir dir;
    auto c = toy_config(PipelineKind::Cs, dir);
    c.provider.mock_mode = MockProvider::RuleMode::Porter;
    c.cs_cache_path = dir.file("cs.tsv");
    const auto cold = run_file(c);
    auto counters = nlohmann::json::parse(read_file(dir.file("out/toy.counters.json")));
    EXPECT_EQ(counters["cs_requests"], 110);
    TokenCache cache;
    cache.load(c.cs_cache_path);
    EXPECT_EQ(cache.size(), 110u);

    EXPECT_EQ(run_file(c), cold);
    counters = nlohmann::json::parse(read_file(dir.file("out/toy.counters.json")));
    EXPECT_EQ(counters["cs_requests"], 0);
}

TEST(Experiment, ContextualFallbackOnUnusableReplies) {
    TempDir dir;
    auto c = toy_config(PipelineKind::Cs, dir);
    // An empty table misses every prompt, which the mock reports with an empty reply.
    testsupport::write_file(dir.file("empty.tsv"), "");
    c.provider.mock_table = dir.file("empty.tsv");
    c.cs_cache_path = dir.file("cs.tsv");
    const auto none = run_file(toy_config(PipelineKind::None, dir, "none"));
    EXPECT_EQ(run_file(c), none);
    const auto counters = nlohmann::json::parse(read_file(dir.file("out/toy.counters.json")));
    EXPECT_EQ(counters["cs_fallbacks"], 110);
    EXPECT_EQ(counters["events"].size(), 110u);
}

TEST(TokenCacheFile, RoundTripAndValidation) {
    TempDir dir;
    TokenCache cache;
    cache.put("b", {"x", "y"});
    cache.put("a", {});
    cache.save(dir.file("c.tsv"));
    EXPECT_EQ(read_file(dir.file("c.tsv")), "a\t\nb\tx y\n");
    TokenCache back;
    back.load(dir.file("c.tsv"));
    EXPECT_EQ(back.find("b"), (TokenStream{"x", "y"}));
    EXPECT_EQ(back.find("a"), TokenStream{});
    EXPECT_FALSE(back.find("c"));
    testsupport::write_file(dir.file("dup.tsv"), "a\tx\na\ty\n");
    TokenCache dup;
    EXPECT_THROW(dup.load(dir.file("dup.tsv")), ParseError);
    testsupport::write_file(dir.file("caps.tsv"), "a\tBad\n");
    EXPECT_THROW(dup.load(dir.file("caps.tsv")), ParseError);
}

namespace {

std::map<std::string, std::size_t> multiset(const TokenStream& ts) {
    std::map<std::string, std::size_t> m;
    for (const auto& t : ts) ++m[t];
    return m;
}

}  // namespace

TEST(Experiment, AllVocabularyEntitiesMatchNoStem) {
    TempDir dir;
    EntityCache cache;
    for (const auto& d : load_corpus(toy("corpus.jsonl"))) {
        const auto toks = tokenize(d.text);
        cache.put(d.doc_id, EntityWords(toks.begin(), toks.end()));
    }
    for (const auto& t : load_topics(toy("topics.tsv"))) {
        const auto toks = tokenize(t.text);
        cache.put(query_entity_key(t.query_id), EntityWords(toks.begin(), toks.end()));
    }
    cache.save(dir.file("all.tsv"));
    auto c = toy_config(PipelineKind::Ecs1, dir, "ecs1");
    c.entity_provider = EntitySource::Cache;
    c.entity_cache_path = dir.file("all.tsv");
    EXPECT_EQ(run_file(c), run_file(toy_config(PipelineKind::None, dir, "none")));
}

TEST(Experiment, Ecs2ContainsEcs1AndAddsStems) {
    TempDir dir;
    const auto docs = load_corpus(toy("corpus.jsonl"));
    const auto topics = load_topics(toy("topics.tsv"));
    auto c1 = toy_config(PipelineKind::Ecs1, dir);
    c1.entity_provider = EntitySource::Rule;
    auto c2 = c1;
    c2.pipeline = PipelineKind::Ecs2;
    const auto t1 = PipelineRunner(c1).run(docs, topics);
    const auto t2 = PipelineRunner(c2).run(docs, topics);
    ASSERT_EQ(t1.docs.size(), t2.docs.size());
    const auto idx = build_index(t2.docs);
    const auto stem = make_stem_fn(StemmerKind::Porter);
    RuleEntityProvider rule;
    std::size_t added = 0;
    for (std::size_t i = 0; i < t1.docs.size(); ++i) {
        ASSERT_EQ(t1.docs[i].doc_id, t2.docs[i].doc_id);
        const auto m1 = multiset(t1.docs[i].tokens);
        const auto m2 = multiset(t2.docs[i].tokens);
        for (const auto& [tok, n] : m1) EXPECT_GE(m2.count(tok) ? m2.at(tok) : 0, n) << tok;
        const auto doc_no = *idx.doc_number(t2.docs[i].doc_id);
        for (const auto& w : rule.extract(docs[i]).words) {
            if (std::find(t1.docs[i].tokens.begin(), t1.docs[i].tokens.end(), w) == t1.docs[i].tokens.end()) continue;
            const auto s = stem(w);
            if (s == w) continue;
            ++added;
            EXPECT_GT(idx.tf(s, doc_no), 0u) << w << " -> " << s;
        }
    }
    EXPECT_GT(added, 0u);
}
