#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "stemlab/error.hpp"
#include "stemlab/index.hpp"
#include "test_support.hpp"

using namespace stemlab;

namespace {

std::vector<IndexDocument> build_example() { return {{"d1", {"a", "b", "a"}}, {"d2", {"b", "c"}}}; }

struct MicroCorpus {
    std::vector<IndexDocument> docs;
    std::map<std::string, std::vector<std::string>> by_id;
};

MicroCorpus random_micro_corpus(std::mt19937& rng) {
    MicroCorpus mc;
    const int n = 1 + static_cast<int>(rng() % 12);
    const std::vector<std::string> vocab = {"a", "b", "c", "d", "e", "f", "g"};
    for (int i = 0; i < n; ++i) {
        TokenStream ts;
        for (int k = static_cast<int>(rng() % 9); k > 0; --k) ts.push_back(vocab[rng() % vocab.size()]);
        const auto id = "doc" + std::to_string(rng() % 1000) + "_" + std::to_string(i);
        mc.docs.push_back({id, ts});
        mc.by_id[id] = ts;
    }
    return mc;
}

}  // namespace

TEST(BuildIndex, HandCountedExample) {
    const auto idx = build_index(build_example());
    EXPECT_EQ(idx.doc_count(), 2u);
    EXPECT_DOUBLE_EQ(idx.avg_doc_len(), 2.5);
    const auto d1 = *idx.doc_number("d1");
    const auto d2 = *idx.doc_number("d2");
    ASSERT_EQ(idx.postings("a").size(), 1u);
    EXPECT_EQ(idx.postings("a")[0], (Posting{d1, 2}));
    ASSERT_EQ(idx.postings("b").size(), 2u);
    EXPECT_EQ(idx.postings("b")[0], (Posting{d1, 1}));
    EXPECT_EQ(idx.postings("b")[1], (Posting{d2, 1}));
    ASSERT_EQ(idx.postings("c").size(), 1u);
    EXPECT_EQ(idx.postings("c")[0], (Posting{d2, 1}));
    EXPECT_TRUE(idx.postings("z").empty());
}

TEST(BuildIndex, SingleEmptyDocument) {
    const std::vector<IndexDocument> docs = {{"only", {}}};
    const auto idx = build_index(docs);
    EXPECT_EQ(idx.doc_count(), 1u);
    EXPECT_EQ(idx.avg_doc_len(), 0.0);
    EXPECT_EQ(idx.term_count(), 0u);
    EXPECT_TRUE(search(idx, {}, {"a"}, 5).empty());
}

TEST(BuildIndex, DuplicateIdRejected) {
    const std::vector<IndexDocument> docs = {{"d1", {"a"}}, {"d1", {"b"}}};
    EXPECT_THROW(build_index(docs), DuplicateError);
    EXPECT_THROW(build_index(std::vector<IndexDocument>{}), InvalidArgument);
}

TEST(BuildIndex, ParallelEqualsSerial) {
    std::mt19937 rng(21);
    for (int trial = 0; trial < 30; ++trial) {
        const auto mc = random_micro_corpus(rng);
        const auto expected = serial::build_index(mc.docs);
        for (int w : {1, 3, 8}) EXPECT_TRUE(build_index(mc.docs, w) == expected);
    }
}

TEST(Bm25, WorkedExample) {
    const auto idx = build_index(build_example());
    const Bm25Params p;
    EXPECT_NEAR(bm25_idf(2, 1), std::log(2.0), 1e-12);
    EXPECT_NEAR(bm25_term_weight(std::log(2.0), 2, 3, 2.5, p) / std::log(2.0), 1.2786, 1e-4);
    EXPECT_NEAR(bm25_score(idx, p, {"a"}, "d1"), 0.8862, 1e-4);
}

TEST(Bm25, AbsentTermsAndEmptyQuery) {
    const auto idx = build_index(build_example());
    EXPECT_EQ(bm25_score(idx, {}, {"z"}, "d1"), 0.0);
    EXPECT_EQ(bm25_score(idx, {}, {}, "d2"), 0.0);
    EXPECT_THROW(bm25_score(idx, {}, {"a"}, "nope"), NotFound);
}

TEST(Bm25, MatchesFormulaOracle) {
    std::mt19937 rng(22);
    for (int trial = 0; trial < 50; ++trial) {
        const auto mc = random_micro_corpus(rng);
        const auto idx = build_index(mc.docs);
        if (idx.total_doc_len() == 0) continue;
        const TokenStream q = {"a", "c", "a", "g", "x"};
        for (const auto& [id, _] : mc.by_id) {
            EXPECT_NEAR(bm25_score(idx, {0.9, 0.4}, q, id), testsupport::oracle_bm25(mc.by_id, q, id, 0.9, 0.4),
                        1e-12);
        }
    }
}

TEST(Bm25Property, MonotoneInTfAndLength) {
    const Bm25Params p;
    const double idf = bm25_idf(100, 7);
    for (double len = 1; len < 60; len += 3) {
        for (double tf = 1; tf < 20; ++tf) {
            EXPECT_LT(bm25_term_weight(idf, tf, len, 10.0, p), bm25_term_weight(idf, tf + 1, len, 10.0, p));
            EXPECT_GT(bm25_term_weight(idf, tf, len, 10.0, p), bm25_term_weight(idf, tf, len + 1, 10.0, p));
        }
    }
    for (std::size_t n = 1; n < 50; ++n) {
        for (std::size_t df = 1; df <= n; ++df) EXPECT_GT(bm25_idf(n, df), 0.0);
    }
}

TEST(Bm25, ParamsValidated) {
    EXPECT_THROW((Bm25Params{-1.0, 0.4}.validate()), InvalidArgument);
    EXPECT_THROW((Bm25Params{0.9, 1.5}.validate()), InvalidArgument);
}

TEST(Search, QueryBOverExample) {
    const auto idx = build_index(build_example());
    const Bm25Params p;
    const auto r = search(idx, p, {"b"}, 10);
    ASSERT_EQ(r.size(), 2u);
    const double s1 = bm25_score(idx, p, {"b"}, "d1");
    const double s2 = bm25_score(idx, p, {"b"}, "d2");
    // Shorter d2 scores higher for the same tf.
    EXPECT_GT(s2, s1);
    EXPECT_EQ(r[0], (ScoredDoc{"d2", s2}));
    EXPECT_EQ(r[1], (ScoredDoc{"d1", s1}));
}

TEST(Search, UnseenTermsAndK) {
    const auto idx = build_index(build_example());
    EXPECT_TRUE(search(idx, {}, {"x", "y"}, 10).empty());
    const auto top = search(idx, {}, {"a", "b", "c"}, 1);
    ASSERT_EQ(top.size(), 1u);
    EXPECT_EQ(top[0].doc_id, serial::exhaustive_search(idx, {}, {"a", "b", "c"}, 1)[0].doc_id);
    EXPECT_THROW(search(idx, {}, {"a"}, 0), InvalidArgument);
}

TEST(Search, TiesBreakByDocId) {
    const std::vector<IndexDocument> docs = {{"zeta", {"a", "b"}}, {"alpha", {"a", "c"}}, {"mid", {"a", "d"}}};
    const auto idx = build_index(docs);
    const auto r = search(idx, {}, {"a"}, 10);
    ASSERT_EQ(r.size(), 3u);
    EXPECT_EQ(r[0].doc_id, "alpha");
    EXPECT_EQ(r[1].doc_id, "mid");
    EXPECT_EQ(r[2].doc_id, "zeta");
}

TEST(SearchProperty, EqualsExhaustiveScoring) {
    std::mt19937 rng(23);
    const std::vector<std::string> vocab = {"a", "b", "c", "d", "e", "f", "g", "h"};
    for (int trial = 0; trial < 100; ++trial) {
        const auto mc = random_micro_corpus(rng);
        const auto idx = build_index(mc.docs);
        TokenStream q;
        for (int k = 1 + static_cast<int>(rng() % 4); k > 0; --k) q.push_back(vocab[rng() % vocab.size()]);
        const std::size_t k = 1 + rng() % 15;
        EXPECT_EQ(search(idx, {}, q, k), serial::exhaustive_search(idx, {}, q, k));

        // k = N returns exactly the documents sharing a term with the query.
        std::set<std::string> sharing;
        for (const auto& [id, toks] : mc.by_id) {
            for (const auto& t : q) {
                if (std::find(toks.begin(), toks.end(), t) != toks.end()) sharing.insert(id);
            }
        }
        std::set<std::string> got;
        for (const auto& r : search(idx, {}, q, idx.doc_count())) {
            got.insert(r.doc_id);
            EXPECT_GT(r.score, 0.0);
            EXPECT_TRUE(std::isfinite(r.score));
        }
        EXPECT_EQ(got, sharing);
    }
}

TEST(SearchAll, ParallelEqualsSerial) {
    std::mt19937 rng(24);
    const auto mc = random_micro_corpus(rng);
    const auto idx = build_index(mc.docs);
    std::vector<TokenStream> queries;
    for (int i = 0; i < 40; ++i) queries.push_back({std::string(1, static_cast<char>('a' + i % 7))});
    const auto expected = serial::search_all(idx, {}, queries, 5);
    for (int w : {1, 2, 8}) EXPECT_EQ(search_all(idx, {}, queries, 5, w), expected);
}

TEST(IndexSnapshot, SaveLoadRoundTrip) {
    testsupport::TempDir dir;
    std::mt19937 rng(25);
    const auto mc = random_micro_corpus(rng);
    const auto idx = build_index(mc.docs);
    idx.save(dir.file("i.bin"));
    const auto back = InvertedIndex::load(dir.file("i.bin"));
    EXPECT_TRUE(back == idx);
    EXPECT_EQ(search(back, {}, {"a", "b"}, 10), search(idx, {}, {"a", "b"}, 10));
}

TEST(IndexSnapshot, CorruptFileRejected) {
    testsupport::TempDir dir;
    testsupport::write_file(dir.file("bad.bin"), "not an index");
    EXPECT_THROW(InvertedIndex::load(dir.file("bad.bin")), Error);
    const auto idx = build_index(build_example());
    idx.save(dir.file("ok.bin"));
    auto bytes = testsupport::read_file(dir.file("ok.bin"));
    testsupport::write_file(dir.file("trunc.bin"), bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(InvertedIndex::load(dir.file("trunc.bin")), Error);
}
