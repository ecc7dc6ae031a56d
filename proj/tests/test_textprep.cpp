#include <doctest.h>

#include <random>

#include "campusrag/textprep.hpp"

using namespace campusrag::textprep;

namespace {

std::string random_text(std::mt19937& rng, std::size_t len) {
    static const std::vector<std::string> pieces = {
        "a", "b", "Z", "q", " ", "  ", "\t", "\n", ",", ".", "!", "?", "'", "-", "(", ")", "\"", "É", "ß", "Ω",
        "Ж", "—", "“", "”", "…", "¿", "中", "7", "0", "_", "@", "#", " ", "Ａ"};
    std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s += pieces[pick(rng)];
    return s;
}

}  // namespace

TEST_CASE("normalize lowercases and strips punctuation") {
    CHECK(normalize("Hello, World!") == "hello world");
    CHECK(normalize("chatbot") == "chatbot");
    CHECK(normalize("Chatbot") == normalize("chatbot"));
    CHECK(normalize("What's TARC?") == "what s tarc");
    CHECK(normalize("  many   spaces\there ") == "many spaces here");
    CHECK(normalize("ÉCOLE—Straße") == "école straße");
    CHECK(normalize("“Quoted” … text") == "quoted text");
    CHECK(normalize("") == "");
    CHECK(normalize("?!.") == "");
}

TEST_CASE("normalize is idempotent on random input") {
    std::mt19937 rng(7);
    for (int i = 0; i < 500; ++i) {
        auto s = random_text(rng, 1 + i % 40);
        auto once = normalize(s);
        CHECK(normalize(once) == once);
    }
}

TEST_CASE("tokenize") {
    CHECK(tokenize("what is tarc") == TokenSeq{"what", "is", "tarc"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("a  b") == TokenSeq{"a", "b"});
    CHECK(tokenize("CSE111--CSE110 (HP)") == TokenSeq{"cse111", "cse110", "hp"});
}

TEST_CASE("tokens never contain whitespace or punctuation") {
    std::mt19937 rng(11);
    for (int i = 0; i < 300; ++i) {
        for (const auto& tok : tokenize(random_text(rng, 30))) {
            REQUIRE_FALSE(tok.empty());
            for (char32_t cp : utf8::decode(tok)) {
                CHECK_FALSE(utf8::is_space(cp));
                CHECK_FALSE(utf8::is_punct(cp));
            }
        }
    }
}

TEST_CASE("lemmatize reduces inflections") {
    CHECK(lemmatize("adding") == "add");
    CHECK(lemmatize("added") == "add");
    CHECK(lemmatize("courses") == "course");
    CHECK(lemmatize("studies") == "study");
    CHECK(lemmatize("studied") == "study");
    CHECK(lemmatize("running") == "run");
    CHECK(lemmatize("boxes") == "box");
    CHECK(lemmatize("churches") == "church");
    CHECK(lemmatize("classes") == "class");
    CHECK(lemmatize("advising") == "advis");
    CHECK(lemmatize("class") == "class");
    CHECK(lemmatize("campus") == "campus");
    CHECK(lemmatize("analysis") == "analysis");
    CHECK(lemmatize("agreed") == "agreed");
    CHECK(lemmatize("is") == "is");
    CHECK(lemmatize("bus") == "bus");
    CHECK(lemmatize("sing") == "sing");
}

TEST_CASE("lemmatize never goes below three characters and is idempotent") {
    std::mt19937 rng(3);
    std::uniform_int_distribution<int> letter('a', 'z');
    std::uniform_int_distribution<int> len(1, 12);
    const std::vector<std::string> suffixes = {"", "s", "es", "ed", "ing", "ies", "ied", "ss", "ning"};
    std::uniform_int_distribution<std::size_t> suf(0, suffixes.size() - 1);
    for (int i = 0; i < 3000; ++i) {
        std::string w;
        for (int n = len(rng); n > 0; --n) w.push_back(static_cast<char>(letter(rng)));
        w += suffixes[suf(rng)];
        auto once = lemmatize(w);
        CHECK_FALSE(once.empty());
        CHECK(once.size() >= std::min<std::size_t>(3, w.size()));
        CHECK(lemmatize(once) == once);
    }
}

TEST_CASE("vocabulary, encode and pad") {
    std::vector<TokenSeq> corpus = {{"add", "course"}, {"course", "drop", "add"}};
    auto vocab = Vocabulary::fit(corpus);
    CHECK(vocab.size() == 3);
    CHECK(vocab.index_of("add") == 1);
    CHECK(vocab.index_of("course") == 2);
    CHECK(vocab.index_of("drop") == 3);
    CHECK(vocab.word(2) == "course");

    CHECK(encode({"add", "course", "add"}, vocab) == std::vector<int>{1, 2, 1});
    CHECK(encode({}, vocab).empty());
    CHECK(encode({"unknown"}, vocab) == std::vector<int>{0});

    auto padded = pad({5, 9});
    REQUIRE(padded.size() == 50);
    CHECK(padded[0] == 5);
    CHECK(padded[1] == 9);
    CHECK(std::count(padded.begin(), padded.end(), 0) == 48);

    std::vector<int> fifty(50);
    std::iota(fifty.begin(), fifty.end(), 1);
    CHECK(pad(fifty) == fifty);

    std::vector<int> sixty(60);
    std::iota(sixty.begin(), sixty.end(), 1);
    auto cut = pad(sixty);
    CHECK(cut == std::vector<int>(sixty.begin(), sixty.begin() + 50));

    CHECK_THROWS(pad({1}, 0));
}

TEST_CASE("pad(encode(x)) always has 50 non-negative entries") {
    std::mt19937 rng(5);
    Vocabulary vocab;
    for (int i = 0; i < 200; ++i) {
        auto tokens = tokenize(random_text(rng, static_cast<std::size_t>(i)));
        for (std::size_t t = 0; t < tokens.size(); t += 2) vocab.add(tokens[t]);
        auto ids = pad(encode(tokens, vocab));
        CHECK(ids.size() == 50);
        CHECK(std::all_of(ids.begin(), ids.end(), [](int v) { return v >= 0; }));
    }
}

TEST_CASE("split_recursive fixed examples") {
    CHECK(split_recursive("").empty());

    std::string short_text(900, 'x');
    auto one = split_recursive(short_text);
    REQUIRE(one.size() == 1);
    CHECK(one[0].start_offset == 0);
    CHECK(one[0].text == short_text);

    std::string long_text(1500, 'y');
    auto two = split_recursive(long_text);
    REQUIRE(two.size() == 2);
    CHECK(two[0].start_offset == 0);
    CHECK(two[0].text.size() == 1000);
    CHECK(two[1].start_offset == 800);
    CHECK(two[1].text.size() == 700);
    CHECK(two[1].chunk_index == 1);

    CHECK_THROWS_AS(split_recursive("abc", 10, 10), std::invalid_argument);
}

TEST_CASE("split_recursive prefers the strongest separator") {
    std::string para = std::string(600, 'a') + "\n\n" + std::string(300, 'b') + ". " + std::string(400, 'c');
    auto chunks = split_recursive(para, 1000, 200);
    REQUIRE(chunks.size() >= 2);
    CHECK(chunks[0].text == std::string(600, 'a') + "\n\n");
}

TEST_CASE("split_recursive chunks rebuild the source") {
    std::mt19937 rng(13);
    const std::vector<std::string> words = {"alpha", "beta", "gamma", "delta", ".", " ", "\n", "\n\n", "ünï", "—"};
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::string text;
        const int n = 1 + static_cast<int>(rng() % 600);
        for (int i = 0; i < n; ++i) {
            text += words[pick(rng)];
            if (rng() % 3 == 0) text += " ";
        }
        const std::size_t size = 20 + rng() % 200;
        const std::size_t overlap = rng() % size;
        auto chunks = split_recursive(text, size, overlap);
        const auto cps = utf8::decode(text);
        std::u32string rebuilt;
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            auto c = utf8::decode(chunks[i].text);
            CHECK(c.size() <= size);
            CHECK(chunks[i].chunk_index == i);
            CHECK(cps.substr(chunks[i].start_offset, c.size()) == c);
            if (i == 0) {
                CHECK(chunks[i].start_offset == 0);
                rebuilt += c;
            } else {
                const auto& prev = chunks[i - 1];
                // consecutive chunks share exactly `overlap` code points
                CHECK(chunks[i].start_offset + overlap == prev.start_offset + utf8::decode(prev.text).size());
                rebuilt += c.substr(overlap);
            }
        }
        CHECK(rebuilt == cps);
    }
}
