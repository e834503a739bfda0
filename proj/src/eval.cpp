#include "moeprune/eval.hpp"

#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace moeprune {

std::vector<std::pair<std::string, std::string>> corpus_directions(
    const std::vector<CorpusSample>& corpus) {
    std::set<std::pair<std::string, std::string>> seen;
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& s : corpus)
        if (seen.insert({s.src_lang, s.tgt_lang}).second)
            out.push_back({s.src_lang, s.tgt_lang});
    return out;
}

EvalReport corpus_eval(const MoEModel& model, const Vocab& vocab,
                       const std::vector<CorpusSample>& corpus,
                       const std::vector<std::pair<std::string, std::string>>& directions,
                       const MaskResolver& resolver, StatsRecorder* recorder) {
    EvalReport report;
    auto join = [](const std::vector<std::string>& toks) {
        std::string s;
        for (size_t i = 0; i < toks.size(); ++i) {
            if (i) s += ' ';
            s += toks[i];
        }
        return s;
    };
    for (const auto& [src, tgt] : directions) {
        const PruningMask* mask = resolver ? resolver(src, tgt) : nullptr;
        std::vector<std::string> hyps;
        std::vector<std::vector<std::string>> refs;
        long hyp_tokens = 0, ref_tokens = 0;
        for (const auto& sample : corpus) {
            if (sample.src_lang != src || sample.tgt_lang != tgt) continue;
            auto out = translate_beam(model, vocab, sample, mask, recorder);
            hyp_tokens += static_cast<long>(out.size());
            ref_tokens += static_cast<long>(sample.tgt_tokens.size());
            hyps.push_back(join(out));
            refs.push_back({join(sample.tgt_tokens)});
        }
        if (hyps.empty())
            throw std::runtime_error("corpus_eval: no samples for direction " + src + "-" +
                                     tgt);
        EvalRow row;
        row.src = src;
        row.tgt = tgt;
        row.chrf_pp = chrf_pp(hyps, refs);
        row.length_ratio =
            static_cast<double>(hyp_tokens) / static_cast<double>(ref_tokens);
        report.rows.push_back(row);
    }
    if (report.rows.empty()) throw std::invalid_argument("corpus_eval: no directions");
    for (const auto& row : report.rows) {
        report.avg_chrf += row.chrf_pp;
        report.avg_length_ratio += row.length_ratio;
    }
    report.avg_chrf /= report.rows.size();
    report.avg_length_ratio /= report.rows.size();
    return report;
}

std::string eval_report_text(const EvalReport& report) {
    std::ostringstream os;
    os << "src\ttgt\tchrf_pp\tlength_ratio\n";
    char buf[64];
    for (const auto& row : report.rows) {
        std::snprintf(buf, sizeof(buf), "%.4f\t%.4f", row.chrf_pp, row.length_ratio);
        os << row.src << '\t' << row.tgt << '\t' << buf << '\n';
    }
    std::snprintf(buf, sizeof(buf), "%.4f\t%.4f", report.avg_chrf,
                  report.avg_length_ratio);
    os << "average\t-\t" << buf << '\n';
    return os.str();
}

}  // namespace moeprune
