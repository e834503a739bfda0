#include "moeprune/chrf.hpp"

#include <cctype>
#include <map>
#include <sstream>
#include <stdexcept>

namespace moeprune {

namespace {

struct OrderStats {
    long match = 0;
    long hyp_total = 0;
    long ref_total = 0;
};

std::string strip_ws(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
    return out;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> toks;
    std::istringstream ss(s);
    std::string t;
    while (ss >> t) toks.push_back(t);
    return toks;
}

std::map<std::string, long> char_ngrams(const std::string& s, int n) {
    std::map<std::string, long> counts;
    if (static_cast<int>(s.size()) >= n)
        for (size_t i = 0; i + n <= s.size(); ++i) counts[s.substr(i, n)] += 1;
    return counts;
}

std::map<std::string, long> word_ngrams(const std::vector<std::string>& toks, int n) {
    std::map<std::string, long> counts;
    if (static_cast<int>(toks.size()) >= n) {
        for (size_t i = 0; i + n <= toks.size(); ++i) {
            std::string key;
            for (int j = 0; j < n; ++j) {
                if (j) key.push_back('\x1f');
                key += toks[i + j];
            }
            counts[key] += 1;
        }
    }
    return counts;
}

OrderStats compare(const std::map<std::string, long>& hyp,
                   const std::map<std::string, long>& ref) {
    OrderStats s;
    for (const auto& [g, c] : hyp) s.hyp_total += c;
    for (const auto& [g, c] : ref) s.ref_total += c;
    for (const auto& [g, c] : hyp) {
        auto it = ref.find(g);
        if (it != ref.end()) s.match += std::min(c, it->second);
    }
    return s;
}

// One segment against one reference; one entry per n-gram order.
std::vector<OrderStats> segment_stats(const std::string& hyp, const std::string& ref,
                                      const ChrfParams& p) {
    std::vector<OrderStats> stats;
    std::string hc = strip_ws(hyp), rc = strip_ws(ref);
    for (int n = 1; n <= p.char_ngram_max; ++n)
        stats.push_back(compare(char_ngrams(hc, n), char_ngrams(rc, n)));
    auto hw = split_ws(hyp);
    auto rw = split_ws(ref);
    for (int n = 1; n <= p.word_ngram_max; ++n)
        stats.push_back(compare(word_ngrams(hw, n), word_ngrams(rw, n)));
    return stats;
}

double score_from(const std::vector<OrderStats>& stats, double beta) {
    double sum = 0.0;
    int used = 0;
    const double b2 = beta * beta;
    for (const auto& s : stats) {
        if (s.ref_total == 0) continue;  // order absent from the references
        double precision = s.hyp_total > 0 ? static_cast<double>(s.match) / s.hyp_total : 0.0;
        double recall = static_cast<double>(s.match) / s.ref_total;
        double denom = b2 * precision + recall;
        sum += denom > 0.0 ? (1.0 + b2) * precision * recall / denom : 0.0;
        ++used;
    }
    return used > 0 ? 100.0 * sum / used : 0.0;
}

}  // namespace

double chrf_pp(const std::vector<std::string>& hypotheses,
               const std::vector<std::vector<std::string>>& references,
               const ChrfParams& params) {
    if (hypotheses.size() != references.size())
        throw std::invalid_argument("chrf_pp: hypothesis/reference count mismatch");
    if (hypotheses.empty()) throw std::invalid_argument("chrf_pp: empty corpus");

    std::vector<OrderStats> corpus(params.char_ngram_max + params.word_ngram_max);
    for (size_t i = 0; i < hypotheses.size(); ++i) {
        const auto& refs = references[i];
        if (refs.empty())
            throw std::invalid_argument("chrf_pp: segment " + std::to_string(i) +
                                        " has no reference");
        std::vector<OrderStats> best;
        double best_score = -1.0;
        for (const auto& ref : refs) {
            auto stats = segment_stats(hypotheses[i], ref, params);
            double score = score_from(stats, params.beta);
            if (score > best_score) {
                best_score = score;
                best = std::move(stats);
            }
        }
        for (size_t k = 0; k < corpus.size(); ++k) {
            corpus[k].match += best[k].match;
            corpus[k].hyp_total += best[k].hyp_total;
            corpus[k].ref_total += best[k].ref_total;
        }
    }
    return score_from(corpus, params.beta);
}

double chrf_pp_segment(const std::string& hypothesis,
                       const std::vector<std::string>& references,
                       const ChrfParams& params) {
    return chrf_pp({hypothesis}, {references}, params);
}

}  // namespace moeprune
