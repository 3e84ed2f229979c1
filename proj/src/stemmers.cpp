#include "stemlab/stemmers.hpp"

#include <array>
#include <fstream>

#include "stemlab/error.hpp"
#include "stemlab/parallel.hpp"

namespace stemlab {

std::string_view to_string(StemmerKind kind) {
    switch (kind) {
        case StemmerKind::NoStem: return "none";
        case StemmerKind::Porter: return "porter";
        case StemmerKind::Dictionary: return "dict";
        case StemmerKind::LlmVocabulary: return "llm";
    }
    return "none";
}

StemmerKind parse_stemmer_kind(std::string_view name) {
    if (name == "none") return StemmerKind::NoStem;
    if (name == "porter") return StemmerKind::Porter;
    if (name == "dict") return StemmerKind::Dictionary;
    if (name == "llm") return StemmerKind::LlmVocabulary;
    throw InvalidArgument("unknown stemmer: " + std::string(name));
}

// ---------------------------------------------------------------------------
// Porter

namespace {

struct Rule {
    std::string_view suffix;
    std::string_view replacement;
};

// First suffix that matches wins, whether or not its measure condition holds.
// Longer suffixes precede the shorter ones they end with.
constexpr std::array kStep2 = {
    Rule{"ational", "ate"}, Rule{"tional", "tion"}, Rule{"enci", "ence"},
    Rule{"anci", "ance"},   Rule{"izer", "ize"},    Rule{"iser", "ise"},
    Rule{"bli", "ble"},     Rule{"alli", "al"},     Rule{"entli", "ent"},
    Rule{"eli", "e"},       Rule{"ousli", "ous"},   Rule{"ization", "ize"},
    Rule{"isation", "ise"}, Rule{"ation", "ate"},   Rule{"ator", "ate"},
    Rule{"alism", "al"},    Rule{"iveness", "ive"}, Rule{"fulness", "ful"},
    Rule{"ousness", "ous"}, Rule{"aliti", "al"},    Rule{"iviti", "ive"},
    Rule{"biliti", "ble"},  Rule{"logi", "log"},
};

constexpr std::array kStep3 = {
    Rule{"icate", "ic"}, Rule{"ative", ""}, Rule{"alize", "al"}, Rule{"alise", "al"},
    Rule{"iciti", "ic"}, Rule{"ical", "ic"}, Rule{"ful", ""},     Rule{"ness", ""},
};

constexpr std::array<std::string_view, 20> kStep4 = {
    "al",  "ance", "ence", "er",  "ic",  "able", "ible", "ant", "ement", "ment",
    "ent", "ion",  "ou",   "ism", "ate", "iti",  "ous",  "ive", "ize",   "ise",
};

class PorterWord {
public:
    explicit PorterWord(std::string_view w) : b_(w) {}

    std::string take() && { return std::move(b_); }

    void run() {
        if (b_.size() <= 2) return;
        step1a();
        step1b();
        step1c();
        apply_table(kStep2);
        apply_table(kStep3);
        step4();
        step5();
    }

private:
    bool cons(std::size_t i) const {
        switch (b_[i]) {
            case 'a': case 'e': case 'i': case 'o': case 'u': return false;
            case 'y': return i == 0 ? true : !cons(i - 1);
            default: return true;
        }
    }

    // Number of VC sequences in b_[0, len).
    int measure(std::size_t len) const {
        int n = 0;
        std::size_t i = 0;
        while (i < len && cons(i)) ++i;
        while (i < len) {
            while (i < len && !cons(i)) ++i;
            if (i >= len) break;
            ++n;
            while (i < len && cons(i)) ++i;
        }
        return n;
    }

    bool vowel_in(std::size_t len) const {
        for (std::size_t i = 0; i < len; ++i) {
            if (!cons(i)) return true;
        }
        return false;
    }

    bool double_cons_at_end(std::size_t len) const {
        return len >= 2 && b_[len - 1] == b_[len - 2] && cons(len - 1);
    }

    // consonant-vowel-consonant ending at len-1, last not w, x, y.
    bool cvc(std::size_t len) const {
        if (len < 3) return false;
        const std::size_t i = len - 1;
        if (!cons(i) || cons(i - 1) || !cons(i - 2)) return false;
        const char c = b_[i];
        return c != 'w' && c != 'x' && c != 'y';
    }

    bool ends(std::string_view s) const { return b_.ends_with(s); }

    std::size_t stem_len(std::string_view suffix) const { return b_.size() - suffix.size(); }

    void replace_suffix(std::string_view suffix, std::string_view with) {
        b_.resize(stem_len(suffix));
        b_ += with;
    }

    void step1a() {
        if (b_.back() != 's') return;
        if (ends("sses")) {
            replace_suffix("sses", "ss");
        } else if (ends("ies")) {
            replace_suffix("ies", "i");
        } else if (b_[b_.size() - 2] != 's') {
            b_.pop_back();
        }
    }

    void step1b() {
        if (ends("eed")) {
            if (measure(stem_len("eed")) > 0) b_.pop_back();
            return;
        }
        std::string_view hit;
        if (ends("ed") && vowel_in(stem_len("ed"))) {
            hit = "ed";
        } else if (ends("ing") && vowel_in(stem_len("ing"))) {
            hit = "ing";
        } else {
            return;
        }
        b_.resize(stem_len(hit));
        if (b_.ends_with("at") || b_.ends_with("bl") || b_.ends_with("iz")) {
            b_.push_back('e');
        } else if (double_cons_at_end(b_.size())) {
            const char c = b_.back();
            if (c != 'l' && c != 's' && c != 'z') b_.pop_back();
        } else if (measure(b_.size()) == 1 && cvc(b_.size())) {
            b_.push_back('e');
        }
    }

    void step1c() {
        if (b_.back() == 'y' && vowel_in(b_.size() - 1)) b_.back() = 'i';
    }

    template <std::size_t N>
    void apply_table(const std::array<Rule, N>& rules) {
        for (const auto& r : rules) {
            if (b_.size() > r.suffix.size() && b_.ends_with(r.suffix)) {
                if (measure(stem_len(r.suffix)) > 0) replace_suffix(r.suffix, r.replacement);
                return;
            }
        }
    }

    void step4() {
        auto try_suffix = [&](std::string_view s) -> int {
            if (!(b_.size() > s.size() && b_.ends_with(s))) return 0;
            const std::size_t len = stem_len(s);
            if (s == "ion" && !(b_[len - 1] == 's' || b_[len - 1] == 't')) return -1;
            if (measure(len) > 1) b_.resize(len);
            return 1;
        };
        for (auto s : kStep4) {
            if (try_suffix(s) != 0) return;
        }
    }

    void step5() {
        if (b_.back() == 'e') {
            const std::size_t len = b_.size() - 1;
            const int m = measure(len);
            if (m > 1 || (m == 1 && !cvc(len))) b_.pop_back();
        }
        if (b_.size() >= 2 && b_.back() == 'l' && double_cons_at_end(b_.size()) &&
            measure(b_.size()) > 1) {
            b_.pop_back();
        }
    }

    std::string b_;
};

bool is_lower_alpha(std::string_view w) {
    for (char c : w) {
        if (c < 'a' || c > 'z') return false;
    }
    return true;
}

bool has_digit(std::string_view w) {
    for (char c : w) {
        if (c >= '0' && c <= '9') return true;
    }
    return false;
}

}  // namespace

std::string porter_stem(std::string_view word) {
    if (!is_lower_alpha(word)) return std::string(word);
    PorterWord w(word);
    w.run();
    return std::move(w).take();
}

// ---------------------------------------------------------------------------
// Dictionary

namespace {

bool is_lowercase_word(std::string_view w) {
    return !w.empty() && fold_case(w) == w;
}

bool is_vowel(char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

void push_removal_candidates(std::string_view stem, std::vector<std::string>& out) {
    if (stem.empty()) return;
    out.emplace_back(stem);
    out.push_back(std::string(stem) + 'e');
    const auto n = stem.size();
    if (n >= 2 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1])) {
        out.emplace_back(stem.substr(0, n - 1));
    }
}

}  // namespace

void StemDictionary::add(std::string word, std::string root) {
    if (!is_lowercase_word(word) || !is_lowercase_word(root)) {
        throw InvalidArgument("dictionary entries must be non-empty lowercase: '" + word +
                              "' -> '" + root + "'");
    }
    entries_.insert_or_assign(std::move(word), std::move(root));
}

const std::string* StemDictionary::find(std::string_view word) const {
    auto it = entries_.find(word);
    return it == entries_.end() ? nullptr : &it->second;
}

StemDictionary StemDictionary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open stem dictionary: " + path);
    StemDictionary dict;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError(path, lineno, "expected word<TAB>root");
        std::string word = line.substr(0, tab);
        std::string root = line.substr(tab + 1);
        if (!is_lowercase_word(word) || !is_lowercase_word(root)) {
            throw ParseError(path, lineno, "entries must be non-empty lowercase");
        }
        dict.add(std::move(word), std::move(root));
    }
    return dict;
}

std::string dict_stem(std::string_view word, const StemDictionary& dict) {
    if (has_digit(word)) return std::string(word);
    if (const auto* root = dict.find(word)) return *root;
    if (dict.empty()) return std::string(word);

    std::vector<std::string> candidates;
    const auto strip = [&](std::string_view suffix) { return word.substr(0, word.size() - suffix.size()); };
    if (word.ends_with("ies") && word.size() > 3) candidates.push_back(std::string(strip("ies")) + 'y');
    if (word.ends_with("es") && word.size() > 2) candidates.emplace_back(strip("es"));
    if (word.ends_with("s") && !word.ends_with("ss") && word.size() > 1) candidates.emplace_back(strip("s"));
    if (word.ends_with("ied") && word.size() > 3) candidates.push_back(std::string(strip("ied")) + 'y');
    if (word.ends_with("ed") && word.size() > 2) push_removal_candidates(strip("ed"), candidates);
    if (word.ends_with("ing") && word.size() > 3) push_removal_candidates(strip("ing"), candidates);

    for (const auto& c : candidates) {
        if (const auto* root = dict.find(c)) return *root;
    }
    return std::string(word);
}

StemFn make_stem_fn(StemmerKind kind, const StemDictionary* dict) {
    switch (kind) {
        case StemmerKind::NoStem:
            return [](const std::string& w) { return w; };
        case StemmerKind::Porter:
            return [](const std::string& w) { return porter_stem(w); };
        case StemmerKind::Dictionary:
            if (dict == nullptr) throw InvalidArgument("dictionary stemmer needs a dictionary");
            return [dict](const std::string& w) { return dict_stem(w, *dict); };
        case StemmerKind::LlmVocabulary:
            break;
    }
    throw InvalidArgument("LLM vocabulary stemming is a pipeline, not a per-token function");
}

TokenStream stem_stream(const TokenStream& ts, const StemFn& stem) {
    TokenStream out;
    out.reserve(ts.size());
    for (const auto& t : ts) out.push_back(stem(t));
    return out;
}

std::vector<TokenStream> stem_corpus(std::span<const TokenStream> corpus, const StemFn& stem,
                                     int workers) {
    std::vector<TokenStream> out(corpus.size());
    ExceptionGuard guard;
    const auto n = static_cast<std::ptrdiff_t>(corpus.size());
#pragma omp parallel for schedule(dynamic, 16) num_threads(resolve_workers(workers))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        guard.run([&] { out[i] = stem_stream(corpus[i], stem); });
    }
    guard.rethrow();
    return out;
}

namespace serial {
std::vector<TokenStream> stem_corpus(std::span<const TokenStream> corpus, const StemFn& stem) {
    std::vector<TokenStream> out;
    out.reserve(corpus.size());
    for (const auto& ts : corpus) out.push_back(stem_stream(ts, stem));
    return out;
}
}  // namespace serial

}  // namespace stemlab
