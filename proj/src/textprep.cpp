#include "campusrag/textprep.hpp"

#include <algorithm>
#include <stdexcept>

namespace campusrag::textprep {

namespace utf8 {

std::u32string decode(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        auto b0 = static_cast<unsigned char>(s[i]);
        if (b0 < 0x80) {
            out.push_back(b0);
            ++i;
            continue;
        }
        int len = 0;
        char32_t cp = 0;
        char32_t min = 0;
        if ((b0 & 0xE0) == 0xC0) {
            len = 2, cp = b0 & 0x1F, min = 0x80;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3, cp = b0 & 0x0F, min = 0x800;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4, cp = b0 & 0x07, min = 0x10000;
        } else {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        if (i + len > s.size()) {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        bool ok = true;
        for (int k = 1; k < len; ++k) {
            auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (b & 0x3F);
        }
        if (!ok || cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

void append(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string encode(std::u32string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char32_t cp : s) append(out, cp);
    return out;
}

namespace {

bool in(char32_t cp, char32_t lo, char32_t hi) { return cp >= lo && cp <= hi; }

// Upper-case letters whose lower-case form sits at cp + 1, for alternating blocks.
bool even_upper(char32_t cp, char32_t lo, char32_t hi) { return in(cp, lo, hi) && (cp - lo) % 2 == 0; }

}  // namespace

// Covers Latin (Basic, Latin-1, Extended-A, Extended Additional), Greek,
// Cyrillic and fullwidth Latin. Scripts without case are unaffected.
char32_t to_lower(char32_t cp) {
    if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 0x20 : cp;
    if (in(cp, 0xC0, 0xDE) && cp != 0xD7) return cp + 0x20;
    if (cp == 0x130) return U'i';
    if (cp == 0x178) return 0xFF;
    if (even_upper(cp, 0x100, 0x12F) || even_upper(cp, 0x132, 0x137) || even_upper(cp, 0x14A, 0x177))
        return cp + 1;
    if (even_upper(cp, 0x139, 0x148) || even_upper(cp, 0x179, 0x17E)) return cp + 1;
    if (in(cp, 0x391, 0x3A1) || in(cp, 0x3A3, 0x3AB)) return cp + 0x20;
    if (cp == 0x386) return 0x3AC;
    if (in(cp, 0x388, 0x38A)) return cp + 37;
    if (cp == 0x38C) return 0x3CC;
    if (in(cp, 0x38E, 0x38F)) return cp + 63;
    if (in(cp, 0x410, 0x42F)) return cp + 0x20;
    if (in(cp, 0x400, 0x40F)) return cp + 0x50;
    if (even_upper(cp, 0x460, 0x481) || even_upper(cp, 0x48A, 0x4BF)) return cp + 1;
    if (even_upper(cp, 0x1E00, 0x1E95) || even_upper(cp, 0x1EA0, 0x1EFF)) return cp + 1;
    if (in(cp, 0xFF21, 0xFF3A)) return cp + 0x20;
    return cp;
}

bool is_punct(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) || (cp >= 0x5B && cp <= 0x60) ||
               (cp >= 0x7B && cp <= 0x7E);
    }
    switch (cp) {
        case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
        case 0x37E: case 0x387: case 0x589: case 0x58A: case 0x5BE: case 0x5C0: case 0x5C3:
        case 0x5C6: case 0x5F3: case 0x5F4: case 0x609: case 0x60A: case 0x60C: case 0x60D:
        case 0x61B: case 0x61E: case 0x61F: case 0x6D4: case 0x964: case 0x965: case 0x970:
        case 0x207D: case 0x207E: case 0x208D: case 0x208E: case 0x2329: case 0x232A:
        case 0x27C5: case 0x27C6: case 0x29FC: case 0x29FD: case 0x3030: case 0x303D:
        case 0x30A0: case 0x30FB: case 0xFE63: case 0xFE68: case 0xFE6A: case 0xFE6B:
        case 0xFF1A: case 0xFF1B: case 0xFF1F: case 0xFF20: case 0xFF3F: case 0xFF5B: case 0xFF5D:
            return true;
        default: break;
    }
    return in(cp, 0x55A, 0x55F) || in(cp, 0x66A, 0x66D) || in(cp, 0x2010, 0x2027) ||
           in(cp, 0x2030, 0x2043) || in(cp, 0x2045, 0x2051) || in(cp, 0x2053, 0x205E) ||
           in(cp, 0x2308, 0x230B) || in(cp, 0x2768, 0x2775) || in(cp, 0x27E6, 0x27EF) ||
           in(cp, 0x2983, 0x2998) || in(cp, 0x29D8, 0x29DB) || in(cp, 0x2CF9, 0x2CFC) ||
           in(cp, 0x2CFE, 0x2CFF) || in(cp, 0x2E00, 0x2E2E) || in(cp, 0x2E30, 0x2E4F) ||
           in(cp, 0x3001, 0x3003) || in(cp, 0x3008, 0x3011) || in(cp, 0x3014, 0x301F) ||
           in(cp, 0xFE10, 0xFE19) || in(cp, 0xFE30, 0xFE52) || in(cp, 0xFE54, 0xFE61) ||
           in(cp, 0xFF01, 0xFF03) || in(cp, 0xFF05, 0xFF0A) || in(cp, 0xFF0C, 0xFF0F) ||
           in(cp, 0xFF3B, 0xFF3D) || in(cp, 0xFF5F, 0xFF65);
}

bool is_space(char32_t cp) {
    return cp == ' ' || (cp >= 0x09 && cp <= 0x0D) || cp == 0x85 || cp == 0xA0 || cp == 0x1680 ||
           in(cp, 0x2000, 0x200A) || cp == 0x2028 || cp == 0x2029 || cp == 0x202F || cp == 0x205F ||
           cp == 0x3000;
}

}  // namespace utf8

std::string normalize(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char32_t cp : utf8::decode(text)) {
        if (utf8::is_space(cp) || utf8::is_punct(cp)) {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        utf8::append(out, utf8::to_lower(cp));
    }
    return out;
}

TokenSeq tokenize(std::string_view text) {
    TokenSeq tokens;
    std::string norm = normalize(text);
    std::size_t pos = 0;
    while (pos < norm.size()) {
        std::size_t next = norm.find(' ', pos);
        if (next == std::string::npos) next = norm.size();
        if (next > pos) tokens.emplace_back(norm.substr(pos, next - pos));
        pos = next + 1;
    }
    return tokens;
}

namespace {

constexpr std::size_t kMinStem = 3;

bool ends_with(std::string_view w, std::string_view suffix) {
    return w.size() >= suffix.size() && w.substr(w.size() - suffix.size()) == suffix;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

bool has_vowel(std::string_view w) {
    return std::any_of(w.begin(), w.end(), [](char c) { return is_vowel(c) || c == 'y'; });
}

std::string undouble(std::string_view stem) {
    std::size_t n = stem.size();
    if (n >= 2 && n - 1 >= kMinStem && stem[n - 1] == stem[n - 2]) {
        char c = stem[n - 1];
        bool consonant = c >= 'a' && c <= 'z' && !is_vowel(c);
        if (consonant && c != 'l' && c != 's' && c != 'z') return std::string(stem.substr(0, n - 1));
    }
    return std::string(stem);
}

// One rule application; returns the input unchanged when nothing fires.
std::string reduce_once(std::string_view w) {
    const std::size_t n = w.size();
    if (ends_with(w, "ied") && n - 3 + 1 >= kMinStem) return std::string(w.substr(0, n - 3)) + "y";
    if (ends_with(w, "ies") && n - 3 + 1 >= kMinStem) return std::string(w.substr(0, n - 3)) + "y";
    if (ends_with(w, "ing")) {
        auto stem = w.substr(0, n - 3);
        if (stem.size() >= kMinStem && has_vowel(stem)) return undouble(stem);
    }
    if (ends_with(w, "ed") && !ends_with(w, "eed")) {
        auto stem = w.substr(0, n - 2);
        if (stem.size() >= kMinStem && has_vowel(stem)) return undouble(stem);
    }
    if (ends_with(w, "es")) {
        auto stem = w.substr(0, n - 2);
        if (stem.size() >= kMinStem && (ends_with(stem, "ss") || ends_with(stem, "zz") || ends_with(stem, "x") ||
                                        ends_with(stem, "ch") || ends_with(stem, "sh")))
            return std::string(stem);
    }
    if (ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") && !ends_with(w, "is") &&
        n - 1 >= kMinStem)
        return std::string(w.substr(0, n - 1));
    return std::string(w);
}

}  // namespace

std::string SuffixLemmatizer::lemmatize(std::string_view token) const {
    std::string current(token);
    for (;;) {
        std::string next = reduce_once(current);
        if (next == current) return current;
        current = std::move(next);
    }
}

std::string lemmatize(std::string_view token) {
    static const SuffixLemmatizer lemmatizer;
    return lemmatizer.lemmatize(token);
}

TokenSeq analyze(std::string_view text) {
    TokenSeq tokens = tokenize(text);
    for (auto& t : tokens) t = lemmatize(t);
    return tokens;
}

Vocabulary Vocabulary::fit(std::span<const TokenSeq> corpus) {
    Vocabulary v;
    for (const auto& seq : corpus)
        for (const auto& w : seq) v.add(w);
    return v;
}

int Vocabulary::add(const std::string& word) {
    auto [it, inserted] = index_.try_emplace(word, static_cast<int>(words_.size()) + 1);
    if (inserted) words_.push_back(word);
    return it->second;
}

int Vocabulary::index_of(std::string_view word) const {
    auto it = index_.find(std::string(word));
    return it == index_.end() ? 0 : it->second;
}

const std::string& Vocabulary::word(int index) const {
    if (index < 1 || static_cast<std::size_t>(index) > words_.size())
        throw std::out_of_range("vocabulary index " + std::to_string(index));
    return words_[static_cast<std::size_t>(index) - 1];
}

std::vector<int> encode(const TokenSeq& seq, const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.reserve(seq.size());
    for (const auto& t : seq) ids.push_back(vocab.index_of(t));
    return ids;
}

std::vector<int> pad(std::vector<int> ids, std::size_t length) {
    if (length == 0) throw std::invalid_argument("pad length must be >= 1");
    ids.resize(length, 0);
    return ids;
}

namespace {

enum class Boundary { Paragraph, Newline, Sentence, Space };

// True when a chunk may end right before position `end`.
bool ends_on(const std::u32string& s, std::size_t end, Boundary kind) {
    switch (kind) {
        case Boundary::Paragraph:
            return end >= 2 && s[end - 1] == U'\n' && s[end - 2] == U'\n';
        case Boundary::Newline:
            return s[end - 1] == U'\n';
        case Boundary::Sentence:
            return end >= 2 && (s[end - 1] == U' ' || s[end - 1] == U'\t') &&
                   (s[end - 2] == U'.' || s[end - 2] == U'!' || s[end - 2] == U'?');
        case Boundary::Space:
            return utf8::is_space(s[end - 1]);
    }
    return false;
}

}  // namespace

std::vector<Chunk> split_recursive(std::string_view text, std::size_t chunk_size, std::size_t overlap) {
    if (chunk_size == 0 || overlap >= chunk_size)
        throw std::invalid_argument("split_recursive requires 0 <= overlap < chunk_size");
    std::vector<Chunk> chunks;
    const std::u32string cps = utf8::decode(text);
    const std::size_t n = cps.size();
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = n;
        if (n - start > chunk_size) {
            const std::size_t hi = start + chunk_size;
            const std::size_t lo = start + overlap + 1;  // next start must advance
            end = hi;
            for (Boundary kind : {Boundary::Paragraph, Boundary::Newline, Boundary::Sentence, Boundary::Space}) {
                std::size_t found = 0;
                for (std::size_t e = hi; e >= lo; --e) {
                    if (ends_on(cps, e, kind)) {
                        found = e;
                        break;
                    }
                }
                if (found) {
                    end = found;
                    break;
                }
            }
        }
        chunks.push_back(Chunk{utf8::encode(std::u32string_view(cps).substr(start, end - start)), start,
                               chunks.size()});
        if (end == n) break;
        start = end - overlap;
    }
    return chunks;
}

}  // namespace campusrag::textprep
