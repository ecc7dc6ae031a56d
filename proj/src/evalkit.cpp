#include "campusrag/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>

#include "campusrag/common.hpp"

namespace campusrag::evalkit {

using json = nlohmann::json;

namespace {

using NgramCounts = std::map<std::vector<std::string_view>, std::size_t>;

NgramCounts ngrams(const TokenSeq& tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[std::vector<std::string_view>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                               tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return counts;
}

std::vector<TokenSeq> tokenize_all(std::span<const std::string> texts) {
    std::vector<TokenSeq> out;
    for (const auto& t : texts) out.push_back(textprep::tokenize(t));
    return out;
}

}  // namespace

BleuComponents bleu(const TokenSeq& candidate, std::span<const TokenSeq> references, const BleuOptions& options) {
    if (options.max_n < 1) throw InvalidInput("BLEU order must be at least 1");
    if (references.empty()) throw InvalidInput("BLEU needs at least one reference");
    const auto n_max = static_cast<std::size_t>(options.max_n);
    BleuComponents out;
    out.weights = options.weights.empty() ? std::vector<double>(n_max, 1.0 / static_cast<double>(n_max))
                                          : options.weights;
    if (out.weights.size() != n_max) throw InvalidInput("BLEU needs one weight per n-gram order");

    out.candidate_length = candidate.size();
    // Closest reference length; the shorter one on a tie.
    out.reference_length = references.front().size();
    for (const auto& ref : references) {
        auto d = [&](std::size_t len) { return len > candidate.size() ? len - candidate.size() : candidate.size() - len; };
        if (d(ref.size()) < d(out.reference_length) ||
            (d(ref.size()) == d(out.reference_length) && ref.size() < out.reference_length))
            out.reference_length = ref.size();
    }

    bool any_zero = false;
    for (std::size_t n = 1; n <= n_max; ++n) {
        auto cand = ngrams(candidate, n);
        std::map<std::vector<std::string_view>, std::size_t> max_ref;
        for (const auto& ref : references)
            for (const auto& [g, c] : ngrams(ref, n)) max_ref[g] = std::max(max_ref[g], c);
        std::size_t clipped = 0;
        for (const auto& [g, c] : cand) {
            auto it = max_ref.find(g);
            if (it != max_ref.end()) clipped += std::min(c, it->second);
        }
        const std::size_t total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
        double p = 0.0;
        if (options.smoothing && n > 1)
            p = static_cast<double>(clipped + 1) / static_cast<double>(total + 1);
        else if (total > 0)
            p = static_cast<double>(clipped) / static_cast<double>(total);
        out.matches.push_back(clipped);
        out.totals.push_back(total);
        out.precisions.push_back(p);
        if (p == 0.0) any_zero = true;
    }

    const double c = static_cast<double>(out.candidate_length);
    const double r = static_cast<double>(out.reference_length);
    if (out.candidate_length == 0) {
        out.brevity_penalty = 0.0;
        out.bleu = 0.0;
        return out;
    }
    out.brevity_penalty = c > r ? 1.0 : std::exp(1.0 - r / c);
    if (any_zero) {
        out.bleu = 0.0;
        return out;
    }
    double log_sum = 0.0;
    for (std::size_t i = 0; i < n_max; ++i) log_sum += out.weights[i] * std::log(out.precisions[i]);
    out.bleu = out.brevity_penalty * std::exp(log_sum);
    return out;
}

BleuComponents bleu(std::string_view candidate, std::span<const std::string> references, const BleuOptions& options) {
    auto refs = tokenize_all(references);
    return bleu(textprep::tokenize(candidate), refs, options);
}

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

RougeLComponents rouge_l(const TokenSeq& candidate, const TokenSeq& reference, double beta) {
    if (!(beta > 0.0)) throw InvalidInput("ROUGE-L beta must be positive");
    RougeLComponents out;
    out.beta = beta;
    if (candidate.empty() && reference.empty()) {
        out.precision = out.recall = out.f = 1.0;
        return out;
    }
    if (candidate.empty() || reference.empty()) return out;
    out.lcs = lcs_length(candidate, reference);
    out.precision = static_cast<double>(out.lcs) / static_cast<double>(candidate.size());
    out.recall = static_cast<double>(out.lcs) / static_cast<double>(reference.size());
    const double b2 = beta * beta;
    const double denom = out.recall + b2 * out.precision;
    out.f = denom > 0.0 ? (1.0 + b2) * out.recall * out.precision / denom : 0.0;
    return out;
}

RougeLComponents rouge_l(std::string_view candidate, std::string_view reference, double beta) {
    return rouge_l(textprep::tokenize(candidate), textprep::tokenize(reference), beta);
}

std::size_t count_chunks(std::span<const int> alignment) {
    std::size_t chunks = 0;
    for (std::size_t i = 0; i < alignment.size(); ++i) {
        if (alignment[i] < 0) continue;
        const bool continues = i > 0 && alignment[i - 1] >= 0 && alignment[i - 1] + 1 == alignment[i];
        if (!continues) ++chunks;
    }
    return chunks;
}

MeteorComponents meteor(const TokenSeq& candidate, const TokenSeq& reference, const MeteorParams& params) {
    MeteorComponents out;
    out.params = params;
    out.alignment.assign(candidate.size(), -1);
    std::vector<bool> ref_used(reference.size(), false);

    // One matching stage: each unmatched candidate token takes an unmatched
    // reference token with the same key, preferring the position right after
    // the previous token's match so contiguous runs stay together.
    auto stage = [&](auto key) {
        std::vector<std::string> cand_keys, ref_keys;
        for (const auto& t : candidate) cand_keys.push_back(key(t));
        for (const auto& t : reference) ref_keys.push_back(key(t));
        for (std::size_t i = 0; i < candidate.size(); ++i) {
            if (out.alignment[i] >= 0) continue;
            int chosen = -1;
            if (i > 0 && out.alignment[i - 1] >= 0) {
                auto next = static_cast<std::size_t>(out.alignment[i - 1] + 1);
                if (next < reference.size() && !ref_used[next] && ref_keys[next] == cand_keys[i])
                    chosen = static_cast<int>(next);
            }
            for (std::size_t j = 0; chosen < 0 && j < reference.size(); ++j)
                if (!ref_used[j] && ref_keys[j] == cand_keys[i]) chosen = static_cast<int>(j);
            if (chosen >= 0) {
                out.alignment[i] = chosen;
                ref_used[static_cast<std::size_t>(chosen)] = true;
            }
        }
    };
    stage([](const std::string& t) { return t; });
    stage([](const std::string& t) { return textprep::lemmatize(t); });

    out.matches = static_cast<std::size_t>(std::count_if(out.alignment.begin(), out.alignment.end(),
                                                         [](int a) { return a >= 0; }));
    if (out.matches == 0) return out;
    out.chunks = count_chunks(out.alignment);
    const double m = static_cast<double>(out.matches);
    out.precision = m / static_cast<double>(candidate.size());
    out.recall = m / static_cast<double>(reference.size());
    out.f_mean = out.precision * out.recall / (params.alpha * out.precision + (1.0 - params.alpha) * out.recall);
    out.penalty = params.gamma * std::pow(static_cast<double>(out.chunks) / m, params.theta);
    out.meteor = out.f_mean * (1.0 - out.penalty);
    return out;
}

MeteorComponents meteor(std::string_view candidate, std::string_view reference, const MeteorParams& params) {
    return meteor(textprep::tokenize(candidate), textprep::tokenize(reference), params);
}

EmbedScoreComponents embed_score(const TokenSeq& candidate, const TokenSeq& reference,
                                 const embed::EmbeddingProvider& provider) {
    EmbedScoreComponents out;
    if (candidate.empty() || reference.empty()) {
        out.candidate_max.assign(candidate.size(), 0.0);
        out.reference_max.assign(reference.size(), 0.0);
        return out;
    }
    std::vector<std::string> distinct(candidate.begin(), candidate.end());
    distinct.insert(distinct.end(), reference.begin(), reference.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    auto vectors = embed::embed_texts(provider, distinct);
    std::unordered_map<std::string, const embed::Vector*> vec;
    for (std::size_t i = 0; i < distinct.size(); ++i) vec[distinct[i]] = &vectors[i];

    auto best = [&](const std::string& token, const TokenSeq& other) {
        double m = 0.0;
        for (const auto& o : other) m = std::max(m, embed::cosine(*vec[token], *vec[o]));
        return m;
    };
    double p = 0.0, r = 0.0;
    for (const auto& t : candidate) {
        out.candidate_max.push_back(best(t, reference));
        p += out.candidate_max.back();
    }
    for (const auto& t : reference) {
        out.reference_max.push_back(best(t, candidate));
        r += out.reference_max.back();
    }
    out.precision = std::min(1.0, p / static_cast<double>(candidate.size()));
    out.recall = std::min(1.0, r / static_cast<double>(reference.size()));
    out.f1 = out.precision + out.recall > 0.0 ? 2.0 * out.precision * out.recall / (out.precision + out.recall) : 0.0;
    return out;
}

EmbedScoreComponents embed_score(std::string_view candidate, std::string_view reference,
                                 const embed::EmbeddingProvider& provider) {
    return embed_score(textprep::tokenize(candidate), textprep::tokenize(reference), provider);
}

MetricReport evaluate_corpus(std::span<const EvalPair> pairs, const embed::EmbeddingProvider& provider,
                             const EvalOptions& options) {
    if (pairs.empty()) throw InvalidInput("evaluation needs at least one pair");
    MetricReport report;
    for (const auto& pair : pairs) {
        if (pair.references.empty()) throw InvalidInput("pair '" + pair.id + "' has no reference");
        PairScores s;
        s.id = pair.id;
        const auto cand = textprep::tokenize(pair.candidate);
        const auto refs = tokenize_all(pair.references);
        s.bleu = bleu(cand, refs, options.bleu);
        for (std::size_t i = 0; i < refs.size(); ++i) {
            auto r = rouge_l(cand, refs[i], options.rouge_beta);
            auto m = meteor(cand, refs[i], options.meteor);
            auto e = embed_score(cand, refs[i], provider);
            if (i == 0 || r.f > s.rouge_l.f) s.rouge_l = r;
            if (i == 0 || m.meteor > s.meteor.meteor) s.meteor = m;
            if (i == 0 || e.f1 > s.embed.f1) s.embed = e;
        }
        report.mean_bleu += s.bleu.bleu;
        report.mean_rouge_l += s.rouge_l.f;
        report.mean_meteor += s.meteor.meteor;
        report.mean_embed_precision += s.embed.precision;
        report.mean_embed_recall += s.embed.recall;
        report.mean_embed_f1 += s.embed.f1;
        report.pairs.push_back(std::move(s));
    }
    const double n = static_cast<double>(report.pairs.size());
    for (double* m : {&report.mean_bleu, &report.mean_rouge_l, &report.mean_meteor, &report.mean_embed_precision,
                      &report.mean_embed_recall, &report.mean_embed_f1})
        *m /= n;
    return report;
}

namespace {

std::string csv_escape(const std::string& v) {
    if (v.find_first_of(",\"\r\n") == std::string::npos) return v;
    std::string q = "\"";
    for (char c : v) {
        if (c == '"') q.push_back('"');
        q.push_back(c);
    }
    return q + "\"";
}

}  // namespace

void MetricReport::write_csv(std::ostream& out) const {
    out << "id,bleu,brevity_penalty,rouge_l,rouge_l_p,rouge_l_r,meteor,meteor_chunks,meteor_matches,"
           "embed_p,embed_r,embed_f1\n";
    auto old_precision = out.precision(10);
    for (const auto& p : pairs) {
        out << csv_escape(p.id) << ',' << p.bleu.bleu << ',' << p.bleu.brevity_penalty << ',' << p.rouge_l.f << ','
            << p.rouge_l.precision << ',' << p.rouge_l.recall << ',' << p.meteor.meteor << ',' << p.meteor.chunks
            << ',' << p.meteor.matches << ',' << p.embed.precision << ',' << p.embed.recall << ',' << p.embed.f1
            << '\n';
    }
    out << "mean," << mean_bleu << ",," << mean_rouge_l << ",,," << mean_meteor << ",,," << mean_embed_precision
        << ',' << mean_embed_recall << ',' << mean_embed_f1 << '\n';
    out.precision(old_precision);
}

json MetricReport::to_json() const {
    json rows = json::array();
    for (const auto& p : pairs) {
        rows.push_back({
            {"id", p.id},
            {"bleu",
             {{"score", p.bleu.bleu},
              {"precisions", p.bleu.precisions},
              {"brevity_penalty", p.bleu.brevity_penalty},
              {"candidate_length", p.bleu.candidate_length},
              {"reference_length", p.bleu.reference_length}}},
            {"rouge_l",
             {{"f", p.rouge_l.f}, {"precision", p.rouge_l.precision}, {"recall", p.rouge_l.recall},
              {"lcs", p.rouge_l.lcs}}},
            {"meteor",
             {{"score", p.meteor.meteor},
              {"matches", p.meteor.matches},
              {"chunks", p.meteor.chunks},
              {"f_mean", p.meteor.f_mean},
              {"penalty", p.meteor.penalty}}},
            {"embed", {{"precision", p.embed.precision}, {"recall", p.embed.recall}, {"f1", p.embed.f1}}},
        });
    }
    return {{"pairs", rows},
            {"means",
             {{"bleu", mean_bleu},
              {"rouge_l", mean_rouge_l},
              {"meteor", mean_meteor},
              {"embed_precision", mean_embed_precision},
              {"embed_recall", mean_embed_recall},
              {"embed_f1", mean_embed_f1}}}};
}

namespace {

std::vector<std::pair<std::string, std::string>> read_jsonl(std::string_view text, const char* what) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = json::parse(line);
            const auto& id = j.at("id");
            out.emplace_back(id.is_string() ? id.get<std::string>() : id.dump(), j.at("text").get<std::string>());
        } catch (const json::exception& e) {
            throw InvalidInput(std::string(what) + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace

std::vector<EvalPair> pair_jsonl(std::string_view predictions, std::string_view references) {
    std::map<std::string, std::vector<std::string>> refs;
    for (auto& [id, text] : read_jsonl(references, "references")) refs[id].push_back(std::move(text));
    std::vector<EvalPair> pairs;
    std::map<std::string, bool> seen;
    for (auto& [id, text] : read_jsonl(predictions, "predictions")) {
        if (seen[id]) throw InvalidInput("duplicate prediction id '" + id + "'");
        seen[id] = true;
        auto it = refs.find(id);
        if (it == refs.end()) throw InvalidInput("no reference for prediction id '" + id + "'");
        pairs.push_back({id, std::move(text), it->second});
    }
    return pairs;
}

}  // namespace campusrag::evalkit
