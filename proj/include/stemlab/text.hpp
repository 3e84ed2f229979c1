#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace stemlab {

struct RawDocument {
    std::string doc_id;
    std::string text;
};

/// Ordered lowercase tokens. Each token is a maximal run of Unicode letters
/// or decimal digits.
using TokenStream = std::vector<std::string>;

inline constexpr std::size_t kDefaultTruncation = 300;

/// Splits `text` into case-folded runs of letters/digits. Everything else is a
/// separator. Input is NFC-normalized first when it contains non-ASCII bytes;
/// invalid UTF-8 sequences act as separators.
TokenStream tokenize(std::string_view text);

/// First `limit` tokens of `ts`. Throws InvalidArgument when limit == 0.
TokenStream truncate_first_p(const TokenStream& ts, std::size_t limit = kDefaultTruncation);

/// Raw-text counterpart of truncate_first_p: the prefix of `text` that ends
/// right after its `limit`-th token, original casing kept. Satisfies
/// tokenize(truncate_text_first_p(t, L)) == truncate_first_p(tokenize(t), L).
std::string truncate_text_first_p(std::string_view text, std::size_t limit = kDefaultTruncation);

/// True when `word` is exactly one token under the tokenizer grammar and is
/// already case-folded.
bool is_token(std::string_view word);

std::string join_tokens(const TokenStream& ts, char sep = ' ');

/// Case-folds a single word (full Unicode folding).
std::string fold_case(std::string_view word);

/// Rule-based entity guess over raw text: maximal runs of capitalized words
/// (joined by spaces, '.', '-', '&' or apostrophes) with leading function
/// words dropped. A lone capitalized word counts only when it is not
/// sentence-initial or is an all-caps acronym. Phrases keep original casing.
std::vector<std::string> capitalized_phrases(std::string_view text);

using StopwordSet = std::unordered_set<std::string>;

TokenStream remove_stopwords(const TokenStream& ts, const StopwordSet& stopwords);

/// One word per line, '#' comments; words are tokenized so the set matches
/// tokenizer output.
StopwordSet load_stopwords(const std::string& path);

}  // namespace stemlab
