#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "campusrag/embed.hpp"
#include "campusrag/textprep.hpp"
#include "campusrag/vecstore.hpp"

namespace campusrag::retriever {

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
};

struct LexicalHit {
    std::string id;
    double score = 0.0;
};

struct IndexedDoc {
    std::string id;
    std::string text;
};

/// Okapi BM25 over analyzed (tokenized + lemmatized) text.
///
///   score(D, Q) = sum over query tokens t of
///                 IDF(t) * f(t,D) * (k1 + 1) / (f(t,D) + k1 * (1 - b + b * |D| / avgdl))
///   IDF(t)      = ln((N - df(t) + 0.5) / (df(t) + 0.5) + 1)
///
/// A term repeated in the query contributes once per occurrence.
class Bm25Index {
public:
    Bm25Index() = default;
    static Bm25Index build(std::span<const IndexedDoc> docs, Bm25Params params = {});

    std::size_t size() const noexcept { return ids_.size(); }
    double avgdl() const noexcept { return avgdl_; }
    std::size_t df(const std::string& term) const;
    double idf(const std::string& term) const;
    std::size_t doc_length(std::size_t doc) const { return lengths_.at(doc); }
    std::size_t term_frequency(const std::string& term, std::size_t doc) const;
    const std::string& id(std::size_t doc) const { return ids_.at(doc); }
    std::optional<std::size_t> position(const std::string& id) const;
    const Bm25Params& params() const noexcept { return params_; }

    double score(std::size_t doc, std::span<const std::string> query_terms) const;
    // Descending score, ties by id; documents scoring 0 are left out.
    std::vector<LexicalHit> topk(std::string_view query, std::size_t k = 10) const;
    std::vector<LexicalHit> topk_terms(std::span<const std::string> query_terms, std::size_t k) const;

private:
    struct Posting {
        std::uint32_t doc;
        std::uint32_t tf;
    };

    Bm25Params params_;
    std::vector<std::string> ids_;
    std::vector<std::size_t> lengths_;
    double avgdl_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

/// One merged candidate before scoring. `distance` is empty for documents
/// that only the lexical side found.
struct Candidate {
    std::string id;
    double bm25_raw = 0.0;
    std::optional<double> distance;
};

// Keyed and ordered by id.
using CandidateMap = std::map<std::string, Candidate>;

CandidateMap merge_candidates(std::span<const LexicalHit> bm25_top, std::span<const vecstore::Neighbor> vec_top);

struct ScoredDoc {
    std::string id;
    std::string document;
    std::string table;
    std::string source_id;
    double bm25_raw = 0.0;
    double bm25_norm = 0.0;
    std::optional<double> distance;
    double similarity = 0.0;
    double combined = 0.0;
};

double similarity_from_distance(std::optional<double> distance);

// combined = lambda * bm25_raw / max(bm25_raw) + (1 - lambda) / (1 + distance),
// sorted descending with ties by id. Only the score fields are filled in.
std::vector<ScoredDoc> fuse(const CandidateMap& candidates, double lambda = 0.5);

struct RetrieverOptions {
    double lambda = 0.5;
    std::size_t bm25_k = 10;
    std::size_t vector_k = 10;
    Bm25Params bm25;
};

/// BM25 and vector search over the same records, fused per query. Both sides
/// read one immutable snapshot of the vector store taken by rebuild(), so
/// queries never see a half-updated index.
class HybridRetriever {
public:
    // Throws InvalidInput when the store was built by a different provider.
    HybridRetriever(const vecstore::VectorStore& store, const embed::EmbeddingProvider& provider,
                    RetrieverOptions options = {});

    void rebuild();

    std::vector<ScoredDoc> retrieve(std::string_view query, std::size_t k) const;
    std::vector<ScoredDoc> retrieve(std::string_view query, std::size_t k, double lambda) const;

    std::size_t size() const;
    const RetrieverOptions& options() const noexcept { return options_; }

private:
    struct Snapshot {
        Bm25Index bm25;
        std::unique_ptr<vecstore::VectorStore> vectors;
        std::unordered_map<std::string, vecstore::VectorRecord> records;
    };

    std::shared_ptr<const Snapshot> current() const;

    const vecstore::VectorStore& store_;
    const embed::EmbeddingProvider& provider_;
    RetrieverOptions options_;
    mutable std::mutex swap_mutex_;
    std::shared_ptr<const Snapshot> snapshot_;
};

}  // namespace campusrag::retriever
