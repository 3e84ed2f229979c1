#include "stemlab/text.hpp"

#include <fstream>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "stemlab/error.hpp"

namespace stemlab {
namespace {

bool is_ascii_alnum(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

bool is_mark(UChar32 c) {
    const auto mask = U_GET_GC_MASK(c);
    return (mask & (U_GC_MN_MASK | U_GC_MC_MASK | U_GC_ME_MASK)) != 0;
}

// Calls fn(begin, end, ascii_only) for every token's byte range in `text`.
// Combining marks extend a run that is already open.
template <typename Fn>
void scan_tokens(std::string_view text, Fn&& fn) {
    const auto* s = reinterpret_cast<const uint8_t*>(text.data());
    const auto length = static_cast<int32_t>(text.size());
    int32_t i = 0;
    int32_t start = -1;
    bool ascii_only = true;
    while (i < length) {
        const int32_t at = i;
        bool token_char;
        bool ascii = s[i] < 0x80;
        if (ascii) {
            token_char = is_ascii_alnum(s[i]);
            ++i;
        } else {
            UChar32 c;
            U8_NEXT(s, i, length, c);
            if (c < 0) {
                token_char = false;
            } else {
                token_char = u_isalpha(c) || u_isdigit(c) || (start >= 0 && is_mark(c));
            }
        }
        if (token_char) {
            if (start < 0) {
                start = at;
                ascii_only = true;
            }
            ascii_only = ascii_only && ascii;
        } else if (start >= 0) {
            fn(static_cast<std::size_t>(start), static_cast<std::size_t>(at), ascii_only);
            start = -1;
        }
    }
    if (start >= 0) {
        fn(static_cast<std::size_t>(start), static_cast<std::size_t>(length), ascii_only);
    }
}

std::string fold_unicode(std::string_view word) {
    icu::UnicodeString u = icu::UnicodeString::fromUTF8(
        icu::StringPiece(word.data(), static_cast<int32_t>(word.size())));
    u.foldCase(U_FOLD_CASE_DEFAULT);
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_SUCCESS(status)) {
        icu::UnicodeString normalized = nfc->normalize(u, status);
        if (U_SUCCESS(status)) u = normalized;
    }
    std::string out;
    u.toUTF8String(out);
    return out;
}

std::string fold_ascii(std::string_view word) {
    std::string out(word);
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

}  // namespace

std::string fold_case(std::string_view word) {
    for (unsigned char c : word) {
        if (c >= 0x80) return fold_unicode(word);
    }
    return fold_ascii(word);
}

TokenStream tokenize(std::string_view text) {
    TokenStream out;
    scan_tokens(text, [&](std::size_t b, std::size_t e, bool ascii_only) {
        const auto piece = text.substr(b, e - b);
        out.push_back(ascii_only ? fold_ascii(piece) : fold_unicode(piece));
    });
    return out;
}

TokenStream truncate_first_p(const TokenStream& ts, std::size_t limit) {
    if (limit == 0) throw InvalidArgument("truncation limit must be >= 1");
    if (ts.size() <= limit) return ts;
    return TokenStream(ts.begin(), ts.begin() + static_cast<std::ptrdiff_t>(limit));
}

std::string truncate_text_first_p(std::string_view text, std::size_t limit) {
    if (limit == 0) throw InvalidArgument("truncation limit must be >= 1");
    std::size_t seen = 0;
    std::size_t cut = text.size();
    bool done = false;
    scan_tokens(text, [&](std::size_t, std::size_t e, bool) {
        if (done) return;
        if (++seen == limit) {
            cut = e;
            done = true;
        }
    });
    return std::string(text.substr(0, cut));
}

bool is_token(std::string_view word) {
    if (word.empty()) return false;
    const auto toks = tokenize(word);
    return toks.size() == 1 && toks.front() == word;
}

std::string join_tokens(const TokenStream& ts, char sep) {
    std::string out;
    std::size_t total = 0;
    for (const auto& t : ts) total += t.size() + 1;
    out.reserve(total);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (i) out.push_back(sep);
        out += ts[i];
    }
    return out;
}

namespace {

struct Span {
    std::size_t begin;
    std::size_t end;
};

// Per-token letter-case profile of text[b, e).
struct CaseShape {
    bool initial_upper = false;
    bool any_lower = false;
    std::size_t codepoints = 0;
};

CaseShape case_shape(std::string_view text, Span sp) {
    CaseShape shape;
    const auto* s = reinterpret_cast<const uint8_t*>(text.data());
    auto i = static_cast<int32_t>(sp.begin);
    const auto end = static_cast<int32_t>(sp.end);
    while (i < end) {
        UChar32 c;
        U8_NEXT(s, i, end, c);
        if (c < 0) continue;
        if (shape.codepoints == 0) shape.initial_upper = u_isupper(c) || u_istitle(c);
        if (u_islower(c)) shape.any_lower = true;
        ++shape.codepoints;
    }
    return shape;
}

bool joins_phrase(std::string_view gap) {
    if (gap.empty()) return true;
    for (char c : gap) {
        if (c != ' ' && c != '.' && c != '-' && c != '&' && c != '\'') return false;
    }
    return true;
}

bool ends_sentence(std::string_view gap) {
    for (char c : gap) {
        if (c == '.' || c == '!' || c == '?' || c == '\n' || c == ':') return true;
    }
    return false;
}

const StopwordSet& phrase_function_words() {
    static const StopwordSet words = {
        "the", "a", "an", "in", "on", "at", "of", "for", "and", "but", "or", "to", "by",
        "this", "that", "these", "those", "it", "its", "we", "our", "they", "he", "she",
        "his", "her", "their", "from", "with", "as", "if", "when", "after", "before"};
    return words;
}

}  // namespace

std::vector<std::string> capitalized_phrases(std::string_view text) {
    std::vector<Span> spans;
    scan_tokens(text, [&](std::size_t b, std::size_t e, bool) { spans.push_back({b, e}); });

    std::vector<std::string> phrases;
    std::size_t i = 0;
    while (i < spans.size()) {
        if (!case_shape(text, spans[i]).initial_upper) {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < spans.size() && case_shape(text, spans[j]).initial_upper &&
               joins_phrase(text.substr(spans[j - 1].end, spans[j].begin - spans[j - 1].end))) {
            ++j;
        }
        std::size_t first = i;
        while (first < j &&
               phrase_function_words().contains(fold_case(
                   text.substr(spans[first].begin, spans[first].end - spans[first].begin)))) {
            ++first;
        }
        std::size_t last = j;
        while (last > first &&
               phrase_function_words().contains(fold_case(
                   text.substr(spans[last - 1].begin, spans[last - 1].end - spans[last - 1].begin)))) {
            --last;
        }
        if (first < last) {
            const std::size_t prev_end = first == 0 ? 0 : spans[first - 1].end;
            const bool sentence_initial =
                first == 0 || ends_sentence(text.substr(prev_end, spans[first].begin - prev_end));
            const auto shape = case_shape(text, spans[first]);
            const bool acronym = !shape.any_lower && shape.codepoints >= 2;
            if (last - first >= 2 || !sentence_initial || acronym) {
                std::string phrase(
                    text.substr(spans[first].begin, spans[last - 1].end - spans[first].begin));
                phrases.push_back(std::move(phrase));
            }
        }
        i = j;
    }
    return phrases;
}

TokenStream remove_stopwords(const TokenStream& ts, const StopwordSet& stopwords) {
    TokenStream out;
    out.reserve(ts.size());
    for (const auto& t : ts) {
        if (!stopwords.contains(t)) out.push_back(t);
    }
    return out;
}

StopwordSet load_stopwords(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open stopword list: " + path);
    StopwordSet out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.front() == '#') continue;
        for (auto& t : tokenize(line)) out.insert(std::move(t));
    }
    return out;
}

}  // namespace stemlab
