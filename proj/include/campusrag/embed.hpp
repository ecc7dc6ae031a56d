#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <semaphore>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace campusrag::embed {

using Vector = std::vector<double>;

/// Contract for anything that turns text into fixed-length unit vectors.
/// Implementations must be deterministic and safe to call from several
/// threads at once.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual std::string name() const = 0;
    virtual std::string model() const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::vector<Vector> embed_batch(std::span<const std::string> texts) const = 0;

    // "<name>/<model>/<dim>"; stored with an index so a mismatched provider is caught.
    std::string fingerprint() const;
};

// Embeds `texts` (must be non-empty), checks shape and finiteness, and returns
// unit-length vectors in input order.
std::vector<Vector> embed_texts(const EmbeddingProvider& provider, std::span<const std::string> texts);
Vector embed_one(const EmbeddingProvider& provider, const std::string& text);

double dot(std::span<const double> u, std::span<const double> v);
double norm(std::span<const double> v);
// Zero-norm input gives 0.
double cosine(std::span<const double> u, std::span<const double> v);
// Returns false (and leaves v alone) when v has zero norm.
bool l2_normalize(Vector& v);

// Groups of words that should embed to the same vector, e.g. {"grading", "marks"}.
using SynonymTable = std::vector<std::vector<std::string>>;

/// Deterministic offline embedder. Each analyzed token (after synonym
/// folding) maps to a signed mixture of a few basis directions chosen by a
/// seeded hash; a text is the normalized sum of its token vectors. Distinct
/// tokens are orthogonal unless their directions collide.
class HashingEmbedder final : public EmbeddingProvider {
public:
    static constexpr std::uint64_t kDefaultSeed = 0x5eed'c0de'2025ULL;
    static constexpr int kDirectionsPerToken = 4;

    explicit HashingEmbedder(std::size_t dim = 256, SynonymTable synonyms = {}, std::uint64_t seed = kDefaultSeed);

    std::string name() const override { return "hashing"; }
    std::string model() const override;
    std::size_t dim() const override { return dim_; }
    std::vector<Vector> embed_batch(std::span<const std::string> texts) const override;

    Vector embed_text(std::string_view text) const;
    // Unnormalized unit vector for a single token (after synonym folding).
    Vector token_vector(std::string_view token) const;

private:
    std::string canonical(std::string_view token) const;

    std::size_t dim_;
    std::uint64_t seed_;
    std::uint64_t synonym_digest_ = 0;
    std::unordered_map<std::string, std::string> synonyms_;
};

std::unique_ptr<EmbeddingProvider> test_embedder(std::size_t dim = 256, SynonymTable synonyms = {});

struct HttpEmbeddingConfig {
    std::string base_url;  // full endpoint URL, e.g. http://host:8080/v1/embeddings
    std::string model;
    std::string api_key_env = "EMBED_API_KEY";
    std::size_t dim = 0;
    std::size_t batch_size = 64;
    std::ptrdiff_t max_in_flight = 4;
    std::chrono::milliseconds timeout{30000};

    // Overrides base_url / model from EMBED_BASE_URL / EMBED_MODEL when set.
    void apply_environment();
};

/// Client for a JSON embedding endpoint:
///   POST {"model": ..., "input": [texts]} -> {"data": [{"embedding": [floats]}, ...]}
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit HttpEmbeddingProvider(HttpEmbeddingConfig config);
    ~HttpEmbeddingProvider() override;

    std::string name() const override { return "http"; }
    std::string model() const override { return config_.model; }
    std::size_t dim() const override { return config_.dim; }
    std::vector<Vector> embed_batch(std::span<const std::string> texts) const override;

private:
    std::vector<Vector> post_batch(std::span<const std::string> texts, long batch_index) const;

    HttpEmbeddingConfig config_;
    mutable std::counting_semaphore<64> in_flight_;
};

}  // namespace campusrag::embed
