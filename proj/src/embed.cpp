#include "campusrag/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "campusrag/common.hpp"
#include "campusrag/textprep.hpp"

namespace campusrag::embed {

std::string EmbeddingProvider::fingerprint() const {
    return name() + "/" + model() + "/" + std::to_string(dim());
}

double dot(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw InvalidInput("dimension mismatch: " + std::to_string(u.size()) + " vs " +
                                                 std::to_string(v.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double cosine(std::span<const double> u, std::span<const double> v) {
    double nu = norm(u);
    double nv = norm(v);
    if (nu == 0.0 || nv == 0.0) return 0.0;
    double c = dot(u, v) / (nu * nv);
    return std::clamp(c, -1.0, 1.0);
}

bool l2_normalize(Vector& v) {
    double n = norm(v);
    if (n == 0.0 || !std::isfinite(n)) return false;
    for (auto& x : v) x /= n;
    return true;
}

std::vector<Vector> embed_texts(const EmbeddingProvider& provider, std::span<const std::string> texts) {
    if (texts.empty()) throw InvalidInput("embed_texts: no texts given");
    auto vectors = provider.embed_batch(texts);
    if (vectors.size() != texts.size())
        throw RemoteError(RemoteError::Kind::MalformedResponse, provider.name(),
                          "expected " + std::to_string(texts.size()) + " vectors, got " +
                              std::to_string(vectors.size()));
    for (auto& v : vectors) {
        if (v.size() != provider.dim())
            throw RemoteError(RemoteError::Kind::MalformedResponse, provider.name(),
                              "vector of dim " + std::to_string(v.size()) + ", expected " +
                                  std::to_string(provider.dim()));
        for (double x : v)
            if (!std::isfinite(x))
                throw RemoteError(RemoteError::Kind::MalformedResponse, provider.name(), "non-finite component");
        if (!l2_normalize(v))
            throw RemoteError(RemoteError::Kind::MalformedResponse, provider.name(), "zero vector");
    }
    return vectors;
}

Vector embed_one(const EmbeddingProvider& provider, const std::string& text) {
    return std::move(embed_texts(provider, std::span<const std::string>(&text, 1)).front());
}

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::string_view kEmptyToken = "\x01<empty>";

}  // namespace

HashingEmbedder::HashingEmbedder(std::size_t dim, SynonymTable synonyms, std::uint64_t seed)
    : dim_(dim), seed_(seed) {
    if (dim < 8) throw InvalidInput("hashing embedder needs dim >= 8");
    std::uint64_t digest = 0xcbf29ce484222325ULL;
    for (const auto& group : synonyms) {
        if (group.empty()) continue;
        auto head = textprep::analyze(group.front());
        if (head.empty()) continue;
        std::string key = "syn:" + head.front();
        for (const auto& word : group) {
            for (const auto& lemma : textprep::analyze(word)) {
                synonyms_.emplace(lemma, key);
                digest = fnv1a(lemma + "=" + key + ";", digest);
            }
        }
    }
    synonym_digest_ = synonyms_.empty() ? 0 : digest;
}

std::string HashingEmbedder::model() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "seed-%016llx-syn-%08llx", static_cast<unsigned long long>(seed_),
                  static_cast<unsigned long long>(synonym_digest_ & 0xffffffffULL));
    return buf;
}

std::string HashingEmbedder::canonical(std::string_view token) const {
    auto it = synonyms_.find(std::string(token));
    return it == synonyms_.end() ? std::string(token) : it->second;
}

Vector HashingEmbedder::token_vector(std::string_view token) const {
    Vector v(dim_, 0.0);
    std::uint64_t state = fnv1a(canonical(token)) ^ seed_;
    std::vector<std::size_t> used;
    const double weight = 1.0 / std::sqrt(static_cast<double>(kDirectionsPerToken));
    while (used.size() < static_cast<std::size_t>(kDirectionsPerToken)) {
        std::uint64_t r = splitmix(state);
        std::size_t idx = static_cast<std::size_t>(r % dim_);
        if (std::find(used.begin(), used.end(), idx) != used.end()) continue;
        used.push_back(idx);
        v[idx] = ((r >> 63) ? -weight : weight);
    }
    return v;
}

Vector HashingEmbedder::embed_text(std::string_view text) const {
    Vector sum(dim_, 0.0);
    auto tokens = textprep::analyze(text);
    for (const auto& t : tokens) {
        auto tv = token_vector(t);
        for (std::size_t i = 0; i < dim_; ++i) sum[i] += tv[i];
    }
    // Empty text, or tokens that cancelled exactly, still gets a unit vector.
    if (!l2_normalize(sum)) sum = token_vector(kEmptyToken);
    return sum;
}

std::vector<Vector> HashingEmbedder::embed_batch(std::span<const std::string> texts) const {
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_text(t));
    return out;
}

std::unique_ptr<EmbeddingProvider> test_embedder(std::size_t dim, SynonymTable synonyms) {
    return std::make_unique<HashingEmbedder>(dim, std::move(synonyms));
}

void HttpEmbeddingConfig::apply_environment() {
    if (const char* url = std::getenv("EMBED_BASE_URL"); url && *url) base_url = url;
    if (const char* m = std::getenv("EMBED_MODEL"); m && *m) model = m;
}

}  // namespace campusrag::embed
