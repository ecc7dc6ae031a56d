#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "campusrag/embed.hpp"
#include "campusrag/textprep.hpp"

namespace campusrag::evalkit {

using textprep::TokenSeq;

struct BleuOptions {
    int max_n = 4;
    std::vector<double> weights;  // empty -> uniform 1/max_n
    // Add-one smoothing on n-gram precisions for n > 1. Off by default.
    bool smoothing = false;
};

struct BleuComponents {
    std::vector<double> precisions;  // p_n, n = 1..N
    std::vector<std::size_t> matches;
    std::vector<std::size_t> totals;
    std::vector<double> weights;
    std::size_t candidate_length = 0;  // c
    std::size_t reference_length = 0;  // r, the reference length closest to c
    double brevity_penalty = 0.0;
    double bleu = 0.0;
};

// Modified n-gram precision with per-reference clipping; no smoothing unless asked.
BleuComponents bleu(const TokenSeq& candidate, std::span<const TokenSeq> references, const BleuOptions& options = {});
BleuComponents bleu(std::string_view candidate, std::span<const std::string> references,
                    const BleuOptions& options = {});

struct RougeLComponents {
    std::size_t lcs = 0;
    double precision = 0.0;  // LCS / |candidate|
    double recall = 0.0;     // LCS / |reference|
    double beta = 1.0;
    double f = 0.0;
};

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b);
RougeLComponents rouge_l(const TokenSeq& candidate, const TokenSeq& reference, double beta = 1.0);
RougeLComponents rouge_l(std::string_view candidate, std::string_view reference, double beta = 1.0);

struct MeteorParams {
    double alpha = 0.9;
    double gamma = 0.5;
    double theta = 3.0;
};

struct MeteorComponents {
    std::size_t matches = 0;
    std::size_t chunks = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f_mean = 0.0;
    double penalty = 0.0;
    double meteor = 0.0;
    MeteorParams params;
    // alignment[i] is the reference position matched by candidate token i, or -1.
    std::vector<int> alignment;
};

// Exact matches first, then matches on lemmas among the tokens left over.
MeteorComponents meteor(const TokenSeq& candidate, const TokenSeq& reference, const MeteorParams& params = {});
MeteorComponents meteor(std::string_view candidate, std::string_view reference, const MeteorParams& params = {});

// Chunk count for an alignment as produced by meteor().
std::size_t count_chunks(std::span<const int> alignment);

struct EmbedScoreComponents {
    std::vector<double> candidate_max;  // per candidate token, best cosine against the reference
    std::vector<double> reference_max;  // per reference token, best cosine against the candidate
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Greedy mean-max cosine over token embeddings in both directions. A token's
// best cosine is floored at 0 so the scores stay in [0, 1].
EmbedScoreComponents embed_score(const TokenSeq& candidate, const TokenSeq& reference,
                                 const embed::EmbeddingProvider& provider);
EmbedScoreComponents embed_score(std::string_view candidate, std::string_view reference,
                                 const embed::EmbeddingProvider& provider);

struct EvalPair {
    std::string id;
    std::string candidate;
    std::vector<std::string> references;
};

struct PairScores {
    std::string id;
    BleuComponents bleu;
    // With several references, the best-scoring one is kept for these three.
    RougeLComponents rouge_l;
    MeteorComponents meteor;
    EmbedScoreComponents embed;
};

struct MetricReport {
    std::vector<PairScores> pairs;
    double mean_bleu = 0.0;
    double mean_rouge_l = 0.0;
    double mean_meteor = 0.0;
    double mean_embed_precision = 0.0;
    double mean_embed_recall = 0.0;
    double mean_embed_f1 = 0.0;

    // id,bleu,brevity_penalty,rouge_l,rouge_l_p,rouge_l_r,meteor,meteor_chunks,
    // meteor_matches,embed_p,embed_r,embed_f1, then one "mean" row.
    void write_csv(std::ostream& out) const;
    nlohmann::json to_json() const;
};

struct EvalOptions {
    BleuOptions bleu;
    double rouge_beta = 1.0;
    MeteorParams meteor;
};

MetricReport evaluate_corpus(std::span<const EvalPair> pairs, const embed::EmbeddingProvider& provider,
                             const EvalOptions& options = {});

// Pairs JSONL files ({"id": ..., "text": ...} per line) by id. A reference
// id may repeat to give several references. Predictions without a reference
// are an error.
std::vector<EvalPair> pair_jsonl(std::string_view predictions, std::string_view references);

}  // namespace campusrag::evalkit
