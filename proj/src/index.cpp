#include "stemlab/index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "stemlab/error.hpp"
#include "stemlab/parallel.hpp"

namespace stemlab {

void Bm25Params::validate() const {
    if (!(k1 >= 0.0) || !std::isfinite(k1)) throw InvalidArgument("bm25 k1 must be >= 0");
    if (!(b >= 0.0 && b <= 1.0)) throw InvalidArgument("bm25 b must be in [0, 1]");
}

// Builds an InvertedIndex from already-ordered parts.
class IndexAssembler {
public:
    static InvertedIndex assemble(std::vector<std::string> doc_ids, std::vector<std::uint32_t> doc_len,
                                  std::unordered_map<std::string, std::vector<Posting>> postings) {
        InvertedIndex idx;
        idx.doc_ids_ = std::move(doc_ids);
        idx.doc_len_ = std::move(doc_len);
        idx.postings_ = std::move(postings);
        idx.finish();
        return idx;
    }
};

void InvertedIndex::finish() {
    doc_lookup_.clear();
    doc_lookup_.reserve(doc_ids_.size());
    for (std::uint32_t i = 0; i < doc_ids_.size(); ++i) doc_lookup_.emplace(doc_ids_[i], i);
    total_len_ = std::accumulate(doc_len_.begin(), doc_len_.end(), std::uint64_t{0});
    avg_doc_len_ = doc_ids_.empty() ? 0.0
                                    : static_cast<double>(total_len_) / static_cast<double>(doc_ids_.size());
}

std::optional<std::uint32_t> InvertedIndex::doc_number(std::string_view doc_id) const {
    auto it = doc_lookup_.find(std::string(doc_id));
    if (it == doc_lookup_.end()) return std::nullopt;
    return it->second;
}

std::span<const Posting> InvertedIndex::postings(std::string_view term) const {
    auto it = postings_.find(std::string(term));
    if (it == postings_.end()) return {};
    return it->second;
}

std::uint32_t InvertedIndex::tf(std::string_view term, std::uint32_t doc) const {
    const auto list = postings(term);
    auto it = std::lower_bound(list.begin(), list.end(), doc,
                               [](const Posting& p, std::uint32_t d) { return p.doc < d; });
    return it != list.end() && it->doc == doc ? it->tf : 0;
}

std::vector<std::string> InvertedIndex::sorted_terms() const {
    std::vector<std::string> terms;
    terms.reserve(postings_.size());
    for (const auto& [t, _] : postings_) terms.push_back(t);
    std::sort(terms.begin(), terms.end());
    return terms;
}

bool InvertedIndex::operator==(const InvertedIndex& o) const {
    return doc_ids_ == o.doc_ids_ && doc_len_ == o.doc_len_ && postings_ == o.postings_;
}

namespace {

// Permutation of `docs` by ascending doc_id; rejects duplicates.
std::vector<std::size_t> doc_order(std::span<const IndexDocument> docs) {
    if (docs.empty()) throw InvalidArgument("cannot build an index over zero documents");
    if (docs.size() > UINT32_MAX) throw InvalidArgument("too many documents");
    std::vector<std::size_t> order(docs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return docs[a].doc_id < docs[b].doc_id; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (docs[order[i]].doc_id == docs[order[i - 1]].doc_id) {
            throw DuplicateError("duplicate document id: " + docs[order[i]].doc_id);
        }
    }
    return order;
}

using TermCounts = std::vector<std::pair<std::string, std::uint32_t>>;

TermCounts count_terms(const TokenStream& tokens) {
    std::vector<std::string_view> sorted(tokens.begin(), tokens.end());
    std::sort(sorted.begin(), sorted.end());
    TermCounts out;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        out.emplace_back(std::string(sorted[i]), static_cast<std::uint32_t>(j - i));
        i = j;
    }
    return out;
}

}  // namespace

InvertedIndex build_index(std::span<const IndexDocument> docs, int workers) {
    const auto order = doc_order(docs);
    const auto n = static_cast<std::ptrdiff_t>(order.size());

    std::vector<TermCounts> counts(order.size());
#pragma omp parallel for schedule(dynamic, 64) num_threads(resolve_workers(workers))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        counts[static_cast<std::size_t>(i)] = count_terms(docs[order[static_cast<std::size_t>(i)]].tokens);
    }

    std::vector<std::string> ids;
    std::vector<std::uint32_t> lens;
    ids.reserve(order.size());
    lens.reserve(order.size());
    std::unordered_map<std::string, std::vector<Posting>> postings;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& doc = docs[order[i]];
        ids.push_back(doc.doc_id);
        lens.push_back(static_cast<std::uint32_t>(doc.tokens.size()));
        for (auto& [term, tf] : counts[i]) {
            postings[std::move(term)].push_back({static_cast<std::uint32_t>(i), tf});
        }
    }
    return IndexAssembler::assemble(std::move(ids), std::move(lens), std::move(postings));
}

double bm25_idf(std::size_t n_docs, std::size_t df) {
    const double n = static_cast<double>(n_docs);
    const double d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double bm25_term_weight(double idf, double tf, double doc_len, double avg_doc_len,
                        const Bm25Params& params) {
    const double norm = avg_doc_len > 0.0 ? doc_len / avg_doc_len : 0.0;
    return idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm));
}

double bm25_score(const InvertedIndex& idx, const Bm25Params& params, const TokenStream& query,
                  std::string_view doc_id) {
    const auto doc = idx.doc_number(doc_id);
    if (!doc) throw NotFound("document not in index: " + std::string(doc_id));
    const double len = idx.doc_len(*doc);
    double score = 0.0;
    for (const auto& term : query) {
        const auto tf = idx.tf(term, *doc);
        if (tf == 0) continue;
        score += bm25_term_weight(bm25_idf(idx.doc_count(), idx.df(term)), tf, len,
                                  idx.avg_doc_len(), params);
    }
    return score;
}

namespace {

SearchResult top_k(const InvertedIndex& idx, std::vector<std::pair<std::uint32_t, double>> scored,
                   std::size_t k) {
    const auto better = [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    };
    if (scored.size() > k) {
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
        scored.resize(k);
    } else {
        std::sort(scored.begin(), scored.end(), better);
    }
    SearchResult out;
    out.reserve(scored.size());
    for (const auto& [doc, s] : scored) out.push_back({idx.doc_id(doc), s});
    return out;
}

}  // namespace

SearchResult search(const InvertedIndex& idx, const Bm25Params& params, const TokenStream& query,
                    std::size_t k) {
    if (k == 0) throw InvalidArgument("search depth k must be >= 1");
    std::vector<double> acc(idx.doc_count(), 0.0);
    std::vector<std::uint32_t> touched;
    // Accumulates in query-token order so each document's sum matches bm25_score bit for bit.
    for (const auto& term : query) {
        const auto list = idx.postings(term);
        if (list.empty()) continue;
        const double idf = bm25_idf(idx.doc_count(), list.size());
        for (const auto& p : list) {
            if (acc[p.doc] == 0.0) touched.push_back(p.doc);
            acc[p.doc] += bm25_term_weight(idf, p.tf, idx.doc_len(p.doc), idx.avg_doc_len(), params);
        }
    }
    std::vector<std::pair<std::uint32_t, double>> scored;
    scored.reserve(touched.size());
    for (auto d : touched) {
        if (acc[d] > 0.0) scored.emplace_back(d, acc[d]);
    }
    return top_k(idx, std::move(scored), k);
}

std::vector<SearchResult> search_all(const InvertedIndex& idx, const Bm25Params& params,
                                     std::span<const TokenStream> queries, std::size_t k,
                                     int workers) {
    if (k == 0) throw InvalidArgument("search depth k must be >= 1");
    std::vector<SearchResult> out(queries.size());
    const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(resolve_workers(workers))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = search(idx, params, queries[static_cast<std::size_t>(i)], k);
    }
    return out;
}

namespace serial {

InvertedIndex build_index(std::span<const IndexDocument> docs) {
    if (docs.empty()) throw InvalidArgument("cannot build an index over zero documents");
    std::map<std::string, std::uint32_t> lens;
    std::map<std::string, std::map<std::string, std::uint32_t>> counts;
    for (const auto& d : docs) {
        if (!lens.emplace(d.doc_id, static_cast<std::uint32_t>(d.tokens.size())).second) {
            throw DuplicateError("duplicate document id: " + d.doc_id);
        }
        for (const auto& t : d.tokens) ++counts[t][d.doc_id];
    }
    std::vector<std::string> ids;
    std::vector<std::uint32_t> doc_len;
    std::map<std::string, std::uint32_t> number;
    for (const auto& [id, len] : lens) {
        number[id] = static_cast<std::uint32_t>(ids.size());
        ids.push_back(id);
        doc_len.push_back(len);
    }
    std::unordered_map<std::string, std::vector<Posting>> postings;
    for (const auto& [term, per_doc] : counts) {
        auto& list = postings[term];
        for (const auto& [id, tf] : per_doc) list.push_back({number.at(id), tf});
    }
    return IndexAssembler::assemble(std::move(ids), std::move(doc_len), std::move(postings));
}

SearchResult exhaustive_search(const InvertedIndex& idx, const Bm25Params& params,
                               const TokenStream& query, std::size_t k) {
    if (k == 0) throw InvalidArgument("search depth k must be >= 1");
    std::vector<std::pair<std::uint32_t, double>> scored;
    for (std::uint32_t d = 0; d < idx.doc_count(); ++d) {
        const double s = bm25_score(idx, params, query, idx.doc_id(d));
        if (s > 0.0) scored.emplace_back(d, s);
    }
    return top_k(idx, std::move(scored), k);
}

std::vector<SearchResult> search_all(const InvertedIndex& idx, const Bm25Params& params,
                                     std::span<const TokenStream> queries, std::size_t k) {
    std::vector<SearchResult> out;
    out.reserve(queries.size());
    for (const auto& q : queries) out.push_back(search(idx, params, q, k));
    return out;
}

}  // namespace serial

// ---------------------------------------------------------------------------
// Snapshot

namespace {

constexpr char kMagic[8] = {'S', 'T', 'L', 'B', 'I', 'D', 'X', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(std::ofstream& out) : out_(out) {}

    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

    template <typename T>
    void fixed(T v) {
        unsigned char buf[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(static_cast<std::uint64_t>(v) >> (8 * i));
        bytes(buf, sizeof(T));
    }

    void varint(std::uint64_t v) {
        unsigned char buf[10];
        std::size_t n = 0;
        while (v >= 0x80) {
            buf[n++] = static_cast<unsigned char>(v | 0x80);
            v >>= 7;
        }
        buf[n++] = static_cast<unsigned char>(v);
        bytes(buf, n);
    }

    void str(std::string_view s) {
        varint(s.size());
        bytes(s.data(), s.size());
    }

private:
    std::ofstream& out_;
};

class Reader {
public:
    Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated snapshot");
    }

    template <typename T>
    T fixed() {
        unsigned char buf[sizeof(T)];
        bytes(buf, sizeof(T));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
        return static_cast<T>(v);
    }

    std::uint64_t varint() {
        std::uint64_t v = 0;
        for (int shift = 0; shift < 64; shift += 7) {
            unsigned char c;
            bytes(&c, 1);
            v |= static_cast<std::uint64_t>(c & 0x7f) << shift;
            if ((c & 0x80) == 0) return v;
        }
        fail("varint overflow");
    }

    std::string str() {
        const auto n = varint();
        if (n > (1u << 20)) fail("string too long");
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(path_, 0, msg); }

private:
    std::ifstream& in_;
    std::string path_;
};

}  // namespace

void InvertedIndex::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write index snapshot: " + path);
    Writer w(out);
    w.bytes(kMagic, sizeof kMagic);
    w.fixed<std::uint32_t>(kVersion);
    w.fixed<std::uint32_t>(0);
    w.fixed<std::uint64_t>(doc_ids_.size());
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
        w.str(doc_ids_[i]);
        w.varint(doc_len_[i]);
    }
    const auto terms = sorted_terms();
    w.fixed<std::uint64_t>(terms.size());
    std::uint64_t total_postings = 0;
    for (const auto& t : terms) {
        const auto& list = postings_.at(t);
        w.str(t);
        w.varint(list.size());
        std::uint32_t prev = 0;
        for (std::size_t i = 0; i < list.size(); ++i) {
            w.varint(i == 0 ? list[i].doc : list[i].doc - prev);
            w.varint(list[i].tf);
            prev = list[i].doc;
        }
        total_postings += list.size();
    }
    w.fixed<std::uint64_t>(total_postings);
    if (!out) throw IoError("failed writing index snapshot: " + path);
}

InvertedIndex InvertedIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open index snapshot: " + path);
    Reader r(in, path);
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) r.fail("not an index snapshot");
    const auto version = r.fixed<std::uint32_t>();
    if (version != kVersion) r.fail("unsupported snapshot version " + std::to_string(version));
    (void)r.fixed<std::uint32_t>();

    const auto n_docs = r.fixed<std::uint64_t>();
    if (n_docs > UINT32_MAX) r.fail("document count out of range");
    std::vector<std::string> ids;
    std::vector<std::uint32_t> lens;
    ids.reserve(n_docs);
    lens.reserve(n_docs);
    for (std::uint64_t i = 0; i < n_docs; ++i) {
        ids.push_back(r.str());
        lens.push_back(static_cast<std::uint32_t>(r.varint()));
        if (i > 0 && !(ids[i - 1] < ids[i])) r.fail("document ids not strictly ascending");
    }
    const auto n_terms = r.fixed<std::uint64_t>();
    std::unordered_map<std::string, std::vector<Posting>> postings;
    postings.reserve(n_terms);
    std::uint64_t total = 0;
    for (std::uint64_t t = 0; t < n_terms; ++t) {
        auto term = r.str();
        const auto df = r.varint();
        if (df == 0 || df > n_docs) r.fail("bad document frequency for term " + term);
        std::vector<Posting> list;
        list.reserve(df);
        std::uint64_t doc = 0;
        for (std::uint64_t i = 0; i < df; ++i) {
            const auto gap = r.varint();
            if (i > 0 && gap == 0) r.fail("non-increasing postings for term " + term);
            doc = i == 0 ? gap : doc + gap;
            const auto tf = r.varint();
            if (doc >= n_docs || tf == 0) r.fail("bad posting for term " + term);
            list.push_back({static_cast<std::uint32_t>(doc), static_cast<std::uint32_t>(tf)});
        }
        total += df;
        if (!postings.emplace(std::move(term), std::move(list)).second) r.fail("duplicate term");
    }
    if (r.fixed<std::uint64_t>() != total) r.fail("postings count mismatch");
    return IndexAssembler::assemble(std::move(ids), std::move(lens), std::move(postings));
}

}  // namespace stemlab
