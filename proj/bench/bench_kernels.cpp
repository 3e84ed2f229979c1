// Serial reference kernels against their OpenMP counterparts on a synthetic
// Zipf-like corpus. Run: stemlab_bench --benchmark_counters_tabular=true

#include <benchmark/benchmark.h>

#include <random>

#include "stemlab/eval.hpp"
#include "stemlab/index.hpp"
#include "stemlab/stemmers.hpp"

using namespace stemlab;

namespace {

const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> v = [] {
        const std::vector<std::string> roots = {"connect", "hunt", "vote", "paint", "grow", "cook", "swim",
                                                "teach", "build", "jump", "relate", "general", "organ", "nation"};
        const std::vector<std::string> suffixes = {"", "s", "ed", "ing", "ion", "ions", "er", "ers", "ness",
                                                   "ational", "ization", "isation", "ful", "ly"};
        std::vector<std::string> out;
        for (const auto& r : roots) {
            for (const auto& s : suffixes) out.push_back(r + s);
        }
        return out;
    }();
    return v;
}

std::vector<TokenStream> synthetic_corpus(std::size_t n_docs, std::size_t doc_len) {
    std::mt19937 rng(42);
    const auto& vocab = vocabulary();
    std::vector<double> weights(vocab.size());
    for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = 1.0 / static_cast<double>(i + 1);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    std::vector<TokenStream> docs(n_docs);
    for (auto& d : docs) {
        d.reserve(doc_len);
        for (std::size_t k = 0; k < doc_len; ++k) d.push_back(vocab[pick(rng)]);
    }
    return docs;
}

std::vector<IndexDocument> as_index_docs(const std::vector<TokenStream>& streams) {
    std::vector<IndexDocument> out;
    out.reserve(streams.size());
    for (std::size_t i = 0; i < streams.size(); ++i) out.push_back({"doc" + std::to_string(i), streams[i]});
    return out;
}

constexpr std::size_t kDocs = 20000;
constexpr std::size_t kLen = 120;

const std::vector<TokenStream>& corpus() {
    static const auto c = synthetic_corpus(kDocs, kLen);
    return c;
}

const InvertedIndex& shared_index() {
    static const auto idx = build_index(as_index_docs(corpus()));
    return idx;
}

const std::vector<TokenStream>& queries() {
    static const auto q = synthetic_corpus(500, 4);
    return q;
}

void BM_StemCorpusSerial(benchmark::State& state) {
    const auto stem = make_stem_fn(StemmerKind::Porter);
    for (auto _ : state) benchmark::DoNotOptimize(serial::stem_corpus(corpus(), stem));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * kDocs * kLen));
}

void BM_StemCorpusParallel(benchmark::State& state) {
    const auto stem = make_stem_fn(StemmerKind::Porter);
    const int workers = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(stem_corpus(corpus(), stem, workers));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * kDocs * kLen));
}

void BM_BuildIndexSerial(benchmark::State& state) {
    const auto docs = as_index_docs(corpus());
    for (auto _ : state) benchmark::DoNotOptimize(serial::build_index(docs));
}

void BM_BuildIndexParallel(benchmark::State& state) {
    const auto docs = as_index_docs(corpus());
    const int workers = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(build_index(docs, workers));
}

void BM_SearchAllSerial(benchmark::State& state) {
    const auto& idx = shared_index();
    for (auto _ : state) benchmark::DoNotOptimize(serial::search_all(idx, {}, queries(), 1000));
}

void BM_SearchAllParallel(benchmark::State& state) {
    const auto& idx = shared_index();
    const int workers = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(search_all(idx, {}, queries(), 1000, workers));
}

struct EvalFixture {
    RunRanking run;
    Qrels qrels;
};

const EvalFixture& eval_fixture() {
    static const EvalFixture f = [] {
        EvalFixture out;
        const auto results = search_all(shared_index(), {}, queries(), 1000);
        std::mt19937 rng(5);
        for (std::size_t i = 0; i < results.size(); ++i) {
            const auto qid = "q" + std::to_string(i);
            for (const auto& r : results[i]) out.run[qid].push_back({r.doc_id, r.score});
            for (int j = 0; j < 30; ++j) {
                out.qrels.add(qid, "doc" + std::to_string(rng() % kDocs), static_cast<int>(rng() % 3));
            }
        }
        return out;
    }();
    return f;
}

void BM_EvaluateSerial(benchmark::State& state) {
    const auto& f = eval_fixture();
    for (auto _ : state) benchmark::DoNotOptimize(serial::evaluate(f.run, f.qrels));
}

void BM_EvaluateParallel(benchmark::State& state) {
    const auto& f = eval_fixture();
    const int workers = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(evaluate(f.run, f.qrels, {}, workers));
}

}  // namespace

BENCHMARK(BM_StemCorpusSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StemCorpusParallel)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_BuildIndexSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BuildIndexParallel)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SearchAllSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SearchAllParallel)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_EvaluateSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluateParallel)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
