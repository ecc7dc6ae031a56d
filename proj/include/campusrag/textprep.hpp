#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace campusrag::textprep {

using TokenSeq = std::vector<std::string>;

// Lowercases, replaces punctuation (ASCII punctuation and the Unicode P
// categories) with spaces, collapses whitespace runs and trims.
std::string normalize(std::string_view text);

// normalize() then split on whitespace.
TokenSeq tokenize(std::string_view text);

class Lemmatizer {
public:
    virtual ~Lemmatizer() = default;
    virtual std::string lemmatize(std::string_view token) const = 0;
};

/// Ordered suffix-rule reducer. Rules, first match wins, reapplied until none fires:
///   -ied -> -y, -ies -> -y, -ing -> (undo consonant doubling), -ed -> (same),
///   -es -> drop when the stem ends in ss/zz/x/ch/sh, -s -> drop (not after s/u/i).
/// No rule ever leaves fewer than 3 characters, so the output is never empty
/// and the function is idempotent.
class SuffixLemmatizer final : public Lemmatizer {
public:
    std::string lemmatize(std::string_view token) const override;
};

// SuffixLemmatizer.
std::string lemmatize(std::string_view token);

// tokenize() followed by lemmatize() on every token.
TokenSeq analyze(std::string_view text);

/// Word to index map. 0 is reserved for padding and out-of-vocabulary words;
/// real words get 1..V in first-seen order.
class Vocabulary {
public:
    static Vocabulary fit(std::span<const TokenSeq> corpus);

    // Returns the index, adding the word if unseen.
    int add(const std::string& word);
    int index_of(std::string_view word) const;
    std::size_t size() const noexcept { return words_.size(); }
    const std::string& word(int index) const;

private:
    std::unordered_map<std::string, int> index_;
    std::vector<std::string> words_;
};

std::vector<int> encode(const TokenSeq& seq, const Vocabulary& vocab);

inline constexpr std::size_t kPadLength = 50;

// Right-pads with 0 or truncates the tail so the result has exactly `length` entries.
std::vector<int> pad(std::vector<int> ids, std::size_t length = kPadLength);

struct Chunk {
    std::string text;
    std::size_t start_offset = 0;  // code point index into the source
    std::size_t chunk_index = 0;
};

struct SplitOptions {
    std::size_t chunk_size = 1000;
    std::size_t overlap = 200;
};

/// Splits into windows of at most chunk_size code points. Each window ends on
/// the strongest boundary available (blank line, newline, sentence end,
/// space, anywhere) and the next one starts `overlap` code points before that
/// end. Dropping the first `overlap` code points of every chunk after the
/// first and concatenating gives back the source exactly.
std::vector<Chunk> split_recursive(std::string_view text, std::size_t chunk_size = 1000,
                                   std::size_t overlap = 200);

inline std::vector<Chunk> split_recursive(std::string_view text, const SplitOptions& opts) {
    return split_recursive(text, opts.chunk_size, opts.overlap);
}

namespace utf8 {

// Decodes UTF-8; invalid bytes become U+FFFD.
std::u32string decode(std::string_view s);
std::string encode(std::u32string_view s);
void append(std::string& out, char32_t cp);

char32_t to_lower(char32_t cp);
bool is_punct(char32_t cp);
bool is_space(char32_t cp);

}  // namespace utf8

}  // namespace campusrag::textprep
