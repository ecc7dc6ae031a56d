#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "campusrag/evalkit.hpp"
#include "helpers.hpp"

using namespace campusrag;
using namespace campusrag::evalkit;

namespace {

TokenSeq toks(std::string_view s) { return textprep::tokenize(s); }

TokenSeq random_seq(std::mt19937& rng, std::size_t max_len, int alphabet) {
    TokenSeq s;
    for (std::size_t n = rng() % (max_len + 1); n > 0; --n) s.push_back(std::string(1, static_cast<char>('a' + rng() % alphabet)));
    return s;
}

// Longest subsequence of `a` (by enumerating all of them) that is also a subsequence of `b`.
std::size_t lcs_oracle(const TokenSeq& a, const TokenSeq& b) {
    std::size_t best = 0;
    for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
        std::size_t len = static_cast<std::size_t>(__builtin_popcount(mask));
        if (len <= best) continue;
        std::size_t j = 0;
        bool ok = true;
        for (std::size_t i = 0; i < a.size() && ok; ++i) {
            if (!(mask & (1u << i))) continue;
            while (j < b.size() && b[j] != a[i]) ++j;
            if (j == b.size()) ok = false;
            else ++j;
        }
        if (ok) best = len;
    }
    return best;
}

const std::string kTen = "all students must register for advising before the semester begins";

}  // namespace

// ---- BLEU ------------------------------------------------------------------

TEST_CASE("bleu golden values") {
    std::vector<std::string> ref = {"the cat sat on the mat"};
    auto b = bleu("the cat sat on mat", ref);
    REQUIRE(b.precisions.size() == 4);
    CHECK(b.precisions[0] == 1.0);
    CHECK(b.precisions[1] == 0.75);
    CHECK(std::abs(b.precisions[2] - 2.0 / 3.0) < 1e-15);
    CHECK(b.precisions[3] == 0.5);
    CHECK(b.candidate_length == 5);
    CHECK(b.reference_length == 6);
    CHECK(std::abs(b.brevity_penalty - std::exp(-0.2)) < 1e-15);
    const double hand = std::exp(-0.2) * std::exp(0.25 * (std::log(1.0) + std::log(0.75) + std::log(2.0 / 3.0) + std::log(0.5)));
    CHECK(std::abs(b.bleu - hand) < 1e-12);
    CHECK(std::abs(b.bleu - 0.5789) < 1e-4);

    std::vector<std::string> same = {kTen};
    CHECK(bleu(kTen, same).bleu == doctest::Approx(1.0).epsilon(1e-15));
    std::vector<std::string> other = {"alpha beta gamma delta"};
    CHECK(bleu("one two three four", other).bleu == 0.0);
    CHECK(bleu("", other).bleu == 0.0);
}

TEST_CASE("bleu clipping, closest reference and smoothing") {
    std::vector<std::string> refs = {"the cat is on the mat", "there is a cat on the mat"};
    auto b = bleu("the the the the the the the", refs, BleuOptions{1, {}, false});
    CHECK(b.matches[0] == 2);
    CHECK(b.totals[0] == 7);
    CHECK(b.reference_length == 7);

    std::vector<std::string> two = {"a b c d e f", "a b c d"};
    CHECK(bleu("a b c d e", two).reference_length == 4);  // equally close: shorter wins

    std::vector<std::string> ref = {"a b c d e f g"};
    auto unsmoothed = bleu("a b x d e y g", ref);
    CHECK(unsmoothed.bleu == 0.0);
    auto smoothed = bleu("a b x d e y g", ref, BleuOptions{4, {}, true});
    CHECK(smoothed.bleu > 0.0);
    CHECK(smoothed.bleu < 1.0);
}

TEST_CASE("bleu with N=1 on equal lengths is unigram precision") {
    std::mt19937 rng(3);
    for (int i = 0; i < 300; ++i) {
        auto ref = random_seq(rng, 12, 6);
        if (ref.empty()) continue;
        TokenSeq cand;
        for (std::size_t k = 0; k < ref.size(); ++k) cand.push_back(std::string(1, static_cast<char>('a' + rng() % 8)));
        std::vector<TokenSeq> refs = {ref};
        auto b = bleu(cand, refs, BleuOptions{1, {}, false});
        CHECK(b.brevity_penalty == 1.0);
        std::map<std::string, int> rc;
        for (const auto& t : ref) ++rc[t];
        std::size_t clipped = 0;
        std::map<std::string, int> cc;
        for (const auto& t : cand) ++cc[t];
        for (const auto& [t, n] : cc) clipped += static_cast<std::size_t>(std::min(n, rc[t]));
        CHECK(std::abs(b.bleu - static_cast<double>(clipped) / static_cast<double>(cand.size())) < 1e-15);
    }
}

TEST_CASE("bleu never rises as matched tokens are replaced") {
    std::mt19937 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        TokenSeq ref;
        for (int i = 0; i < 12; ++i) ref.push_back("w" + std::to_string(rng() % 9));
        std::vector<TokenSeq> refs = {ref};
        TokenSeq cand = ref;
        double prev = bleu(cand, refs).bleu;
        std::vector<std::size_t> order(cand.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (auto pos : order) {
            cand[pos] = "novel" + std::to_string(pos);
            double now = bleu(cand, refs).bleu;
            CHECK(now <= prev + 1e-15);
            CHECK(now >= 0.0);
            prev = now;
        }
    }
}

// ---- ROUGE-L -----------------------------------------------------------------

TEST_CASE("rouge_l golden values") {
    auto r = rouge_l("a b c d", "a c d e");
    CHECK(r.lcs == 3);
    CHECK(r.precision == 0.75);
    CHECK(r.recall == 0.75);
    CHECK(r.f == 0.75);
    CHECK(rouge_l(kTen, kTen).f == 1.0);
    CHECK(rouge_l("a b", "c d").f == 0.0);
    CHECK(rouge_l("", "").f == 1.0);
    CHECK(rouge_l("", "a").f == 0.0);
    CHECK(rouge_l("a", "").f == 0.0);

    auto beta = rouge_l(toks("a b"), toks("a b c d"), 2.0);
    const double p = 1.0, rr = 0.5;
    CHECK(std::abs(beta.f - (1 + 4) * rr * p / (rr + 4 * p)) < 1e-15);
}

TEST_CASE("lcs matches subsequence enumeration") {
    std::mt19937 rng(10);
    for (int i = 0; i < 2000; ++i) {
        auto a = random_seq(rng, 10, 4), b = random_seq(rng, 10, 4);
        CHECK(lcs_length(a, b) == lcs_oracle(a, b));
        CHECK(lcs_length(a, b) == lcs_length(b, a));
    }
}

// ---- METEOR ------------------------------------------------------------------

TEST_CASE("meteor golden values") {
    auto same = meteor(kTen, kTen);
    CHECK(same.matches == 10);
    CHECK(same.chunks == 1);
    CHECK(same.f_mean == 1.0);
    CHECK(std::abs(same.meteor - 0.9995) < 1e-6);

    auto swapped = meteor("cat the", "the cat");
    CHECK(swapped.matches == 2);
    CHECK(swapped.chunks == 2);
    CHECK(swapped.precision == 1.0);
    CHECK(swapped.recall == 1.0);
    CHECK(swapped.meteor == 0.5);

    CHECK(meteor("one two", "three four").meteor == 0.0);
    CHECK(meteor("", "x").meteor == 0.0);
}

TEST_CASE("meteor lemma stage and alignment rules") {
    auto m = meteor("students register courses", "student registers course");
    CHECK(m.matches == 3);
    CHECK(m.chunks == 1);

    auto partial = meteor("the cat the", "the cat");
    CHECK(partial.matches == 2);
    CHECK(partial.alignment == std::vector<int>{0, 1, -1});

    const double p = 2.0 / 3.0, r = 1.0;
    const double fmean = p * r / (0.9 * p + 0.1 * r);
    CHECK(std::abs(partial.f_mean - fmean) < 1e-15);
    CHECK(std::abs(partial.meteor - fmean * (1 - 0.5 * std::pow(0.5, 3))) < 1e-15);
}

TEST_CASE("meteor alignments are one-to-one and the penalty grows with chunks") {
    std::mt19937 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        TokenSeq ref;
        for (int i = 0; i < 8; ++i) ref.push_back("t" + std::to_string(i));
        TokenSeq cand = ref;
        std::shuffle(cand.begin(), cand.end(), rng);
        auto m = meteor(cand, ref);
        CHECK(m.matches == 8);
        std::set<int> used;
        for (int a : m.alignment) {
            CHECK(a >= 0);
            CHECK(used.insert(a).second);
        }
        // Chunks recounted by hand from the alignment.
        std::size_t chunks = 0;
        for (std::size_t i = 0; i < m.alignment.size(); ++i)
            if (i == 0 || m.alignment[i] != m.alignment[i - 1] + 1) ++chunks;
        CHECK(m.chunks == chunks);
        CHECK(count_chunks(m.alignment) == chunks);
        CHECK(std::abs(m.penalty - 0.5 * std::pow(static_cast<double>(chunks) / 8.0, 3)) < 1e-15);
        CHECK(m.meteor >= 0.0);
        CHECK(m.meteor <= 1.0);
    }
    double prev_penalty = -1;
    std::size_t prev_chunks = 0;
    for (std::size_t rev = 1; rev <= 8; ++rev) {
        // Reversing the first `rev` tokens leaves rev singleton chunks plus the untouched tail.
        TokenSeq ref;
        for (int i = 0; i < 8; ++i) ref.push_back("t" + std::to_string(i));
        TokenSeq cand = ref;
        std::reverse(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(rev));
        auto m = meteor(cand, ref);
        const std::size_t expect = rev == 1 ? 1 : (rev == 8 ? 8 : rev + 1);
        CHECK(m.chunks == expect);
        CHECK(m.matches == 8);
        if (m.chunks > prev_chunks) CHECK(m.penalty > prev_penalty);
        else CHECK(m.penalty == prev_penalty);
        prev_penalty = m.penalty;
        prev_chunks = m.chunks;
    }
}

// ---- embedding score -----------------------------------------------------------

TEST_CASE("embed_score with orthogonal token vectors") {
    testing::OneHotEmbedder onehot(16);
    auto s = embed_score(TokenSeq{"a", "b"}, TokenSeq{"a", "c"}, onehot);
    CHECK(s.precision == 0.5);
    CHECK(s.recall == 0.5);
    CHECK(s.f1 == 0.5);
    CHECK(s.candidate_max == std::vector<double>{1.0, 0.0});

    auto same = embed_score(TokenSeq{"a", "b", "c"}, TokenSeq{"a", "b", "c"}, onehot);
    CHECK(same.precision == 1.0);
    CHECK(same.recall == 1.0);
    CHECK(same.f1 == 1.0);
    auto none = embed_score(TokenSeq{"d", "e"}, TokenSeq{"f"}, onehot);
    CHECK(none.precision == 0.0);
    CHECK(none.f1 == 0.0);
    CHECK(embed_score(TokenSeq{}, TokenSeq{"a"}, onehot).f1 == 0.0);

    auto asym = embed_score(TokenSeq{"a"}, TokenSeq{"a", "g", "h", "i"}, onehot);
    CHECK(asym.precision == 1.0);
    CHECK(asym.recall == 0.25);
    CHECK(std::abs(asym.f1 - 0.4) < 1e-15);
}

TEST_CASE("embed_score stays in range with a hashing provider") {
    auto provider = embed::test_embedder(64);
    std::mt19937 rng(13);
    for (int i = 0; i < 200; ++i) {
        TokenSeq a, b;
        for (std::size_t n = 1 + rng() % 6; n > 0; --n) a.push_back("w" + std::to_string(rng() % 20));
        for (std::size_t n = 1 + rng() % 6; n > 0; --n) b.push_back("w" + std::to_string(rng() % 20));
        auto s = embed_score(a, b, *provider);
        for (double v : {s.precision, s.recall, s.f1}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

// ---- corpus evaluation -----------------------------------------------------------

TEST_CASE("evaluate_corpus means, multiple references and reports") {
    auto provider = embed::test_embedder();
    std::vector<EvalPair> one = {{"q1", kTen, {kTen}}};
    auto r = evaluate_corpus(one, *provider);
    CHECK(std::abs(r.mean_bleu - 1.0) < 1e-12);
    CHECK(r.mean_rouge_l == 1.0);
    CHECK(std::abs(r.mean_meteor - 0.9995) < 1e-6);
    CHECK(std::abs(r.mean_embed_f1 - 1.0) < 1e-12);

    std::vector<EvalPair> pairs = {{"q1", kTen, {kTen}}, {"q2", "", {"something else entirely"}},
                                   {"q3", "a b c d", {"x y z", "a c d e"}}};
    auto rep = evaluate_corpus(pairs, *provider);
    REQUIRE(rep.pairs.size() == 3);
    CHECK(rep.pairs[1].bleu.bleu == 0.0);
    CHECK(rep.pairs[1].rouge_l.f == 0.0);
    CHECK(rep.pairs[1].meteor.meteor == 0.0);
    CHECK(rep.pairs[1].embed.f1 == 0.0);
    CHECK(rep.pairs[2].rouge_l.f == 0.75);  // best reference kept
    double mean = 0;
    for (const auto& p : rep.pairs) mean += p.rouge_l.f;
    CHECK(std::abs(rep.mean_rouge_l - mean / 3) < 1e-15);

    std::ostringstream csv;
    rep.write_csv(csv);
    const std::string text = csv.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);  // header, 3 pairs, mean
    CHECK(text.rfind("id,bleu,", 0) == 0);
    auto j = rep.to_json();
    CHECK(j["pairs"].size() == 3);
    CHECK(j["means"]["rouge_l"].get<double>() == rep.mean_rouge_l);
}

TEST_CASE("pair_jsonl joins by id") {
    auto pairs = pair_jsonl("{\"id\":\"1\",\"text\":\"hello there\"}\n{\"id\":\"2\",\"text\":\"bye\"}\n",
                            "{\"id\":\"2\",\"text\":\"goodbye\"}\n{\"id\":\"1\",\"text\":\"hello\"}\n"
                            "{\"id\":\"1\",\"text\":\"hi there\"}\n");
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].id == "1");
    CHECK(pairs[0].references.size() == 2);
    CHECK(pairs[1].references == std::vector<std::string>{"goodbye"});
    CHECK_THROWS_AS(pair_jsonl("{\"id\":\"9\",\"text\":\"x\"}\n", "{\"id\":\"1\",\"text\":\"y\"}\n"), InvalidInput);
    CHECK_THROWS(pair_jsonl("not json\n", ""));
}
