#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stemlab/text.hpp"

namespace stemlab {

/// Pyserini defaults.
struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;

    void validate() const;
};

/// Internal document numbers follow ascending doc_id order, so postings
/// sorted by number are sorted by doc_id.
struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;
    bool operator==(const Posting&) const = default;
};

struct IndexDocument {
    std::string doc_id;
    TokenStream tokens;
};

class InvertedIndex {
public:
    std::size_t doc_count() const noexcept { return doc_ids_.size(); }
    double avg_doc_len() const noexcept { return avg_doc_len_; }
    std::uint64_t total_doc_len() const noexcept { return total_len_; }
    std::size_t term_count() const noexcept { return postings_.size(); }

    const std::string& doc_id(std::uint32_t doc) const { return doc_ids_.at(doc); }
    std::optional<std::uint32_t> doc_number(std::string_view doc_id) const;
    std::uint32_t doc_len(std::uint32_t doc) const { return doc_len_.at(doc); }

    /// Empty span for unseen terms.
    std::span<const Posting> postings(std::string_view term) const;
    std::size_t df(std::string_view term) const { return postings(term).size(); }
    std::uint32_t tf(std::string_view term, std::uint32_t doc) const;

    /// Terms in ascending byte order.
    std::vector<std::string> sorted_terms() const;

    /// Single-file snapshot; layout in docs/index_format.md.
    void save(const std::string& path) const;
    static InvertedIndex load(const std::string& path);

    bool operator==(const InvertedIndex& o) const;

private:
    friend class IndexAssembler;

    void finish();

    std::vector<std::string> doc_ids_;
    std::unordered_map<std::string, std::uint32_t> doc_lookup_;
    std::vector<std::uint32_t> doc_len_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::uint64_t total_len_ = 0;
    double avg_doc_len_ = 0.0;
};

/// Counts terms per document in parallel, then merges single-threaded in
/// doc_id order. Throws InvalidArgument on an empty collection and
/// DuplicateError naming a repeated doc_id.
InvertedIndex build_index(std::span<const IndexDocument> docs, int workers = 0);

/// Lucene-style idf: ln(1 + (N - df + 0.5) / (df + 0.5)).
double bm25_idf(std::size_t n_docs, std::size_t df);

/// One term's contribution for a document.
double bm25_term_weight(double idf, double tf, double doc_len, double avg_doc_len,
                        const Bm25Params& params);

/// Sum over query-token occurrences; absent terms contribute 0.
/// Throws NotFound for an unknown doc_id.
double bm25_score(const InvertedIndex& idx, const Bm25Params& params, const TokenStream& query,
                  std::string_view doc_id);

struct ScoredDoc {
    std::string doc_id;
    double score;
    bool operator==(const ScoredDoc&) const = default;
};

/// Scores descending, ties by ascending doc_id, only scores > 0, at most k.
using SearchResult = std::vector<ScoredDoc>;

/// Term-at-a-time accumulation. Throws InvalidArgument when k == 0.
SearchResult search(const InvertedIndex& idx, const Bm25Params& params, const TokenStream& query,
                    std::size_t k);

/// One search per query, OpenMP-parallel over queries.
std::vector<SearchResult> search_all(const InvertedIndex& idx, const Bm25Params& params,
                                     std::span<const TokenStream> queries, std::size_t k,
                                     int workers = 0);

namespace serial {
/// Direct ordered-map construction, no parallel merge.
InvertedIndex build_index(std::span<const IndexDocument> docs);
/// Exhaustive scoring of every document with bm25_score.
SearchResult exhaustive_search(const InvertedIndex& idx, const Bm25Params& params,
                               const TokenStream& query, std::size_t k);
std::vector<SearchResult> search_all(const InvertedIndex& idx, const Bm25Params& params,
                                     std::span<const TokenStream> queries, std::size_t k);
}  // namespace serial

}  // namespace stemlab
