#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stemlab/text.hpp"

namespace stemlab {

enum class StemmerKind { NoStem, Porter, Dictionary, LlmVocabulary };

/// Stable names: "none", "porter", "dict", "llm".
std::string_view to_string(StemmerKind kind);
StemmerKind parse_stemmer_kind(std::string_view name);

/// Porter (1980) suffix stripper, rule tables as in the reference C release
/// (bli->ble, logi->log), extended with British -is- spellings:
/// step 2 isation->ise, iser->ise; step 3 alise->al; step 4 drops -ise.
/// Words that are not pure [a-z] are returned unchanged.
std::string porter_stem(std::string_view word);

/// word -> root list used by the dictionary (Krovetz-style) stemmer.
class StemDictionary {
public:
    StemDictionary() = default;

    /// Throws InvalidArgument when either side is empty or not lowercase.
    void add(std::string word, std::string root);

    const std::string* find(std::string_view word) const;
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    /// TSV "word<TAB>root", '#' comment lines, blank lines ignored.
    static StemDictionary load(const std::string& path);

private:
    struct Hash {
        using is_transparent = void;
        std::size_t operator()(std::string_view s) const noexcept {
            return std::hash<std::string_view>{}(s);
        }
    };
    std::unordered_map<std::string, std::string, Hash, std::equal_to<>> entries_;
};

/// Direct lookup first; otherwise inflectional candidates (-ies/-es/-s,
/// -ied/-ed, -ing with e-restoration and consonant undoubling) are tried in a
/// fixed order and the first one present in the dictionary wins. Unchanged
/// when nothing matches.
std::string dict_stem(std::string_view word, const StemDictionary& dict);

using StemFn = std::function<std::string(const std::string&)>;

StemFn make_stem_fn(StemmerKind kind, const StemDictionary* dict = nullptr);

TokenStream stem_stream(const TokenStream& ts, const StemFn& stem);

/// Applies `stem` to every stream; OpenMP-parallel over documents.
/// `stem` must be safe to call concurrently.
std::vector<TokenStream> stem_corpus(std::span<const TokenStream> corpus, const StemFn& stem,
                                     int workers = 0);

namespace serial {
std::vector<TokenStream> stem_corpus(std::span<const TokenStream> corpus, const StemFn& stem);
}  // namespace serial

}  // namespace stemlab
