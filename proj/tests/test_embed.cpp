#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "campusrag/embed.hpp"
#include "campusrag/textprep.hpp"
#include "helpers.hpp"

using namespace campusrag;
using namespace campusrag::embed;

namespace {

std::string random_word(std::mt19937& rng) {
    std::uniform_int_distribution<int> letter('a', 'z');
    std::uniform_int_distribution<int> len(4, 9);
    std::string w;
    for (int n = len(rng); n > 0; --n) w.push_back(static_cast<char>(letter(rng)));
    return w;
}

}  // namespace

TEST_CASE("cosine examples") {
    Vector x{1, 0}, y{0, 1}, d{1, 1};
    CHECK(cosine(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine(x, y) == 0.0);
    REQUIRE(l2_normalize(d));
    CHECK(std::abs(cosine(d, x) - 0.70710678) < 1e-8);
    CHECK(std::abs(dot(d, x) - 1.0 / std::sqrt(2.0)) < 1e-12);
    Vector zero{0, 0};
    CHECK(cosine(zero, x) == 0.0);
    CHECK_FALSE(l2_normalize(zero));
    CHECK(zero == Vector{0, 0});
}

TEST_CASE("cosine is symmetric and bounded") {
    std::mt19937 rng(1);
    std::normal_distribution<double> g;
    for (int i = 0; i < 200; ++i) {
        Vector u(16), v(16);
        for (auto& a : u) a = g(rng);
        for (auto& a : v) a = g(rng);
        CHECK(cosine(u, v) == doctest::Approx(cosine(v, u)).epsilon(1e-12));
        CHECK(std::abs(cosine(u, v)) <= 1.0 + 1e-12);
        l2_normalize(u);
        CHECK(std::abs(cosine(u, u) - 1.0) < 1e-12);
    }
}

TEST_CASE("hashing embedder is deterministic and unit norm") {
    auto p = test_embedder();
    CHECK(p->dim() == 256);
    auto a = embed_one(*p, "advising");
    auto b = embed_one(*p, "advising");
    CHECK(a == b);
    HashingEmbedder other;  // a second instance behaves like a restarted process
    CHECK(other.embed_text("advising") == a);
    CHECK(p->fingerprint() == other.fingerprint());

    std::vector<std::string> texts = {"add a course", "", "Drop deadline is Friday!"};
    auto vs = embed_texts(*p, texts);
    REQUIRE(vs.size() == 3);
    for (const auto& v : vs) {
        CHECK(v.size() == p->dim());
        CHECK(std::abs(norm(v) - 1.0) < 1e-6);
        for (double x : v) CHECK(std::isfinite(x));
    }
    CHECK_THROWS_AS(embed_texts(*p, std::vector<std::string>{}), InvalidInput);
    CHECK_THROWS_AS(HashingEmbedder(4), InvalidInput);
}

TEST_CASE("unit norm holds on random text") {
    std::mt19937 rng(9);
    HashingEmbedder p(64);
    for (int i = 0; i < 300; ++i) {
        std::string text;
        for (int n = static_cast<int>(rng() % 12); n > 0; --n) text += random_word(rng) + " ";
        CHECK(std::abs(norm(p.embed_text(text)) - 1.0) < 1e-6);
    }
}

TEST_CASE("synonyms embed together") {
    HashingEmbedder p(256, {{"grading", "marks", "assessment"}});
    CHECK(cosine(p.embed_text("grading"), p.embed_text("marks")) > 0.9);
    CHECK(cosine(p.embed_text("grading"), p.embed_text("assessments")) > 0.9);
    CHECK(p.fingerprint() != HashingEmbedder(256).fingerprint());
}

TEST_CASE("texts sharing no tokens are nearly orthogonal") {
    // Bound measured on this seed and frozen.
    HashingEmbedder p(256);
    std::mt19937 rng(2025);
    double worst = 0.0;
    for (int pair = 0; pair < 100; ++pair) {
        std::set<std::string> left, right;
        const int n = 3 + static_cast<int>(rng() % 6);
        for (int i = 0; i < n; ++i) left.insert(textprep::lemmatize(random_word(rng)));
        for (int i = 0; i < n; ++i) {
            auto w = textprep::lemmatize(random_word(rng));
            if (!left.count(w)) right.insert(w);
        }
        std::string a, b;
        for (const auto& w : left) a += w + " ";
        for (const auto& w : right) b += w + " ";
        worst = std::max(worst, std::abs(cosine(p.embed_text(a), p.embed_text(b))));
    }
    MESSAGE("max |cos| over 100 disjoint pairs = " << worst);
    CHECK(worst < 0.15);
}

TEST_CASE("disjoint-text cosines have the spread of random 256-d directions") {
    HashingEmbedder p(256);
    std::mt19937 rng(99);
    double sum_sq = 0.0, sum = 0.0;
    const int pairs = 4000;
    for (int pair = 0; pair < pairs; ++pair) {
        std::set<std::string> left, right;
        for (int i = 0; i < 8; ++i) left.insert(textprep::lemmatize(random_word(rng)));
        for (int i = 0; i < 8; ++i) {
            auto w = textprep::lemmatize(random_word(rng));
            if (!left.count(w)) right.insert(w);
        }
        std::string a, b;
        for (const auto& w : left) a += w + " ";
        for (const auto& w : right) b += w + " ";
        const double c = cosine(p.embed_text(a), p.embed_text(b));
        sum += c;
        sum_sq += c * c;
    }
    // Mean ~0 and rms ~1/sqrt(dim); both within 5 standard errors.
    CHECK(std::abs(sum / pairs) < 5 * (1.0 / 16) / std::sqrt(pairs));
    CHECK(std::abs(std::sqrt(sum_sq / pairs) - 1.0 / 16) < 0.004);
}

TEST_CASE("one-hot stub gives exact zeros for distinct texts") {
    testing::OneHotEmbedder p(8);
    auto v = embed_texts(p, std::vector<std::string>{"a", "b", "a"});
    CHECK(cosine(v[0], v[1]) == 0.0);
    CHECK(cosine(v[0], v[2]) == 1.0);
}

TEST_CASE("embed_texts rejects a misbehaving provider") {
    struct Bad final : EmbeddingProvider {
        std::string name() const override { return "bad"; }
        std::string model() const override { return "m"; }
        std::size_t dim() const override { return 4; }
        std::vector<Vector> embed_batch(std::span<const std::string> texts) const override {
            std::vector<Vector> out(texts.size(), Vector{1, 0, 0, NAN});
            return out;
        }
    } bad;
    CHECK_THROWS(embed_one(bad, "x"));
}

TEST_CASE("http provider batches, keeps order and reports failures with batch index") {
    testing::StubServer stub;
    std::atomic<int> calls{0};
    std::atomic<bool> fail{false};
    stub.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        auto body = nlohmann::json::parse(req.body);
        if (fail.load() && body["input"][0] == "t4") {
            res.status = 500;
            return;
        }
        nlohmann::json data = nlohmann::json::array();
        for (const auto& t : body["input"]) {
            std::string s = t;
            data.push_back({{"embedding", {static_cast<double>(std::stoi(s.substr(1))) + 1.0, 1.0, 0.0}}});
        }
        res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
    });
    stub.start();

    HttpEmbeddingConfig cfg;
    cfg.base_url = stub.url("/v1/embeddings");
    cfg.model = "stub";
    cfg.dim = 3;
    cfg.batch_size = 2;
    cfg.timeout = std::chrono::milliseconds(2000);
    HttpEmbeddingProvider p(cfg);
    std::vector<std::string> texts;
    for (int i = 0; i < 7; ++i) texts.push_back("t" + std::to_string(i));
    auto vs = embed_texts(p, texts);
    REQUIRE(vs.size() == 7);
    CHECK(calls.load() == 4);
    for (int i = 0; i < 7; ++i) {
        Vector expect{i + 1.0, 1.0, 0.0};
        l2_normalize(expect);
        CHECK(std::abs(vs[i][0] - expect[0]) < 1e-12);
    }

    fail = true;
    try {
        embed_texts(p, texts);
        FAIL("expected RemoteError");
    } catch (const RemoteError& e) {
        CHECK(e.source() == "http:stub");
        CHECK(e.batch_index() == 2);
        CHECK(e.retryable());
    }
}
