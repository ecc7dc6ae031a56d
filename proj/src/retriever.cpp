#include "campusrag/retriever.hpp"

#include <algorithm>
#include <cmath>

namespace campusrag::retriever {

Bm25Index Bm25Index::build(std::span<const IndexedDoc> docs, Bm25Params params) {
    Bm25Index index;
    index.params_ = params;
    std::size_t total = 0;
    for (const auto& doc : docs) {
        auto [_, fresh] = index.by_id_.emplace(doc.id, index.ids_.size());
        if (!fresh) throw InvalidInput("duplicate document id '" + doc.id + "'");
        const auto doc_no = static_cast<std::uint32_t>(index.ids_.size());
        index.ids_.push_back(doc.id);

        auto terms = textprep::analyze(doc.text);
        index.lengths_.push_back(terms.size());
        total += terms.size();
        std::sort(terms.begin(), terms.end());
        for (std::size_t i = 0; i < terms.size();) {
            std::size_t j = i;
            while (j < terms.size() && terms[j] == terms[i]) ++j;
            index.postings_[terms[i]].push_back({doc_no, static_cast<std::uint32_t>(j - i)});
            i = j;
        }
    }
    index.avgdl_ = docs.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(docs.size());
    return index;
}

std::size_t Bm25Index::df(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

double Bm25Index::idf(const std::string& term) const {
    const double n = static_cast<double>(size());
    const double d = static_cast<double>(df(term));
    return std::log((n - d + 0.5) / (d + 0.5) + 1.0);
}

std::size_t Bm25Index::term_frequency(const std::string& term, std::size_t doc) const {
    auto it = postings_.find(term);
    if (it == postings_.end()) return 0;
    auto p = std::lower_bound(it->second.begin(), it->second.end(), doc,
                              [](const Posting& a, std::size_t d) { return a.doc < d; });
    return p != it->second.end() && p->doc == doc ? p->tf : 0;
}

std::optional<std::size_t> Bm25Index::position(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

double Bm25Index::score(std::size_t doc, std::span<const std::string> query_terms) const {
    double s = 0.0;
    for (const auto& t : query_terms) {
        const double f = static_cast<double>(term_frequency(t, doc));
        if (f == 0.0) continue;
        const double len_norm = 1.0 - params_.b + params_.b * static_cast<double>(lengths_[doc]) / avgdl_;
        s += idf(t) * f * (params_.k1 + 1.0) / (f + params_.k1 * len_norm);
    }
    return s;
}

std::vector<LexicalHit> Bm25Index::topk(std::string_view query, std::size_t k) const {
    auto terms = textprep::analyze(query);
    return topk_terms(terms, k);
}

std::vector<LexicalHit> Bm25Index::topk_terms(std::span<const std::string> query_terms, std::size_t k) const {
    if (k == 0) throw InvalidInput("k must be at least 1");
    // Accumulate term by term over postings, in query order, so the sum for
    // each document is formed the same way score() forms it.
    std::unordered_map<std::uint32_t, double> acc;
    for (const auto& t : query_terms) {
        auto it = postings_.find(t);
        if (it == postings_.end()) continue;
        const double w = idf(t);
        for (const auto& p : it->second) {
            const double f = p.tf;
            const double len_norm = 1.0 - params_.b + params_.b * static_cast<double>(lengths_[p.doc]) / avgdl_;
            acc[p.doc] += w * f * (params_.k1 + 1.0) / (f + params_.k1 * len_norm);
        }
    }
    std::vector<LexicalHit> hits;
    hits.reserve(acc.size());
    for (const auto& [doc, s] : acc)
        if (s > 0.0) hits.push_back({ids_[doc], s});
    auto better = [](const LexicalHit& a, const LexicalHit& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    };
    const std::size_t n = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), better);
    hits.resize(n);
    return hits;
}

CandidateMap merge_candidates(std::span<const LexicalHit> bm25_top, std::span<const vecstore::Neighbor> vec_top) {
    CandidateMap merged;
    for (const auto& h : bm25_top) {
        auto& c = merged[h.id];
        c.id = h.id;
        c.bm25_raw = h.score;
    }
    for (const auto& n : vec_top) {
        auto& c = merged[n.id];
        c.id = n.id;  // a vector-only entry keeps bm25_raw == 0
        c.distance = n.distance;
    }
    return merged;
}

double similarity_from_distance(std::optional<double> distance) {
    if (!distance) return 0.0;
    if (*distance < 0.0) throw InvalidInput("negative distance");
    return 1.0 / (1.0 + *distance);
}

std::vector<ScoredDoc> fuse(const CandidateMap& candidates, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidInput("lambda must be in [0, 1]");
    double max_raw = 0.0;
    for (const auto& [_, c] : candidates) {
        if (c.bm25_raw < 0.0) throw InvalidInput("negative bm25 score for '" + c.id + "'");
        max_raw = std::max(max_raw, c.bm25_raw);
    }
    std::vector<ScoredDoc> out;
    out.reserve(candidates.size());
    for (const auto& [id, c] : candidates) {
        ScoredDoc d;
        d.id = id;
        d.bm25_raw = c.bm25_raw;
        d.bm25_norm = max_raw > 0.0 ? c.bm25_raw / max_raw : 0.0;
        d.distance = c.distance;
        d.similarity = similarity_from_distance(c.distance);
        d.combined = lambda * d.bm25_norm + (1.0 - lambda) * d.similarity;
        out.push_back(std::move(d));
    }
    std::stable_sort(out.begin(), out.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        return a.combined != b.combined ? a.combined > b.combined : a.id < b.id;
    });
    return out;
}

HybridRetriever::HybridRetriever(const vecstore::VectorStore& store, const embed::EmbeddingProvider& provider,
                                 RetrieverOptions options)
    : store_(store), provider_(provider), options_(options) {
    if (store_.fingerprint() != provider_.fingerprint())
        throw InvalidInput("vector store was built with '" + store_.fingerprint() + "' but the query provider is '" +
                           provider_.fingerprint() + "'");
    if (!(options_.lambda >= 0.0 && options_.lambda <= 1.0)) throw InvalidInput("lambda must be in [0, 1]");
    if (options_.bm25_k == 0 || options_.vector_k == 0) throw InvalidInput("fan-in sizes must be at least 1");
    rebuild();
}

void HybridRetriever::rebuild() {
    auto snap = std::make_shared<Snapshot>();
    auto records = store_.snapshot();
    std::vector<IndexedDoc> docs;
    docs.reserve(records.size());
    for (const auto& r : records) docs.push_back({r.id, r.document});
    snap->bm25 = Bm25Index::build(docs, options_.bm25);
    snap->vectors = std::make_unique<vecstore::VectorStore>(store_.dim(), store_.fingerprint());
    snap->vectors->upsert(records);
    for (auto& r : records) {
        r.vector.clear();
        r.vector.shrink_to_fit();
        std::string id = r.id;
        snap->records.emplace(std::move(id), std::move(r));
    }
    std::lock_guard lock(swap_mutex_);
    snapshot_ = std::move(snap);
}

std::shared_ptr<const HybridRetriever::Snapshot> HybridRetriever::current() const {
    std::lock_guard lock(swap_mutex_);
    return snapshot_;
}

std::size_t HybridRetriever::size() const { return current()->records.size(); }

std::vector<ScoredDoc> HybridRetriever::retrieve(std::string_view query, std::size_t k) const {
    return retrieve(query, k, options_.lambda);
}

std::vector<ScoredDoc> HybridRetriever::retrieve(std::string_view query, std::size_t k, double lambda) const {
    if (k == 0) throw InvalidInput("k must be at least 1");
    auto snap = current();
    if (snap->records.empty()) return {};

    auto lexical = snap->bm25.topk(query, options_.bm25_k);
    auto qvec = embed::embed_one(provider_, std::string(query));
    auto semantic = snap->vectors->query(qvec, options_.vector_k);

    auto fused = fuse(merge_candidates(lexical, semantic), lambda);
    if (fused.size() > k) fused.resize(k);
    for (auto& d : fused) {
        const auto& r = snap->records.at(d.id);
        d.document = r.document;
        d.table = r.metadata.table;
        d.source_id = r.metadata.source_id;
    }
    return fused;
}

}  // namespace campusrag::retriever
