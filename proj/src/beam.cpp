#include "moeprune/beam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace moeprune {

namespace {

struct Hypothesis {
    std::vector<int> tokens;  // decoder input: target language token first
    double logp = 0.0;
    bool finished = false;

    double score() const {
        // normalize by the number of generated tokens (incl. eos)
        size_t len = tokens.size();  // first entry is the language token
        return logp / static_cast<double>(std::max<size_t>(len - 1 + (finished ? 1 : 0), 1));
    }
};

Eigen::VectorXd last_row_log_softmax(const ag::Var& logits) {
    Eigen::VectorXd row = logits->value.row(logits->value.rows() - 1);
    double m = row.maxCoeff();
    double lse = m + std::log((row.array() - m).exp().sum());
    return row.array() - lse;
}

}  // namespace

std::vector<std::string> translate_beam(const MoEModel& model, const Vocab& vocab,
                                        const CorpusSample& sample, const PruningMask* mask,
                                        StatsRecorder* recorder, int beam_size, int max_len) {
    if (!vocab.has_language(sample.src_lang))
        throw std::invalid_argument("unknown language code: " + sample.src_lang);
    if (!vocab.has_language(sample.tgt_lang))
        throw std::invalid_argument("unknown language code: " + sample.tgt_lang);
    if (beam_size <= 0) beam_size = model.config().beam_size;
    if (max_len <= 0) max_len = 2 * static_cast<int>(sample.src_tokens.size()) + 8;

    ag::NoGradGuard no_grad;

    GateRecordFn enc_rec = nullptr;
    if (recorder)
        enc_rec = [&](const GateDecision& d) {
            recorder->record(d, sample.src_lang, sample.tgt_lang, Side::encoder);
        };
    ag::Var memory = model.encode(encoder_input(vocab, sample), mask, enc_rec);

    const int lang = vocab.lang_token(sample.tgt_lang);
    const int eos = vocab.eos();
    std::vector<Hypothesis> beams = {Hypothesis{{lang}, 0.0, false}};
    std::vector<Hypothesis> finished;

    for (int step = 0; step < max_len && !beams.empty(); ++step) {
        std::vector<Hypothesis> candidates;
        for (const auto& hyp : beams) {
            ag::Var logits = model.decoder_logits(memory, hyp.tokens, mask);
            Eigen::VectorXd logp = last_row_log_softmax(logits);
            // top beam_size continuations, ties by lower token id
            std::vector<int> ids(logp.size());
            for (int i = 0; i < logp.size(); ++i) ids[i] = i;
            std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
                if (logp(a) != logp(b)) return logp(a) > logp(b);
                return a < b;
            });
            for (int i = 0; i < beam_size && i < static_cast<int>(ids.size()); ++i) {
                Hypothesis next = hyp;
                next.logp += logp(ids[i]);
                if (ids[i] == eos) {
                    next.finished = true;
                    finished.push_back(next);
                } else {
                    next.tokens.push_back(ids[i]);
                    candidates.push_back(next);
                }
            }
        }
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Hypothesis& a, const Hypothesis& b) {
                             return a.score() > b.score();
                         });
        if (static_cast<int>(candidates.size()) > beam_size) candidates.resize(beam_size);
        beams = std::move(candidates);
        // stop once no live beam can beat the best finished hypothesis
        if (static_cast<int>(finished.size()) >= beam_size) {
            double best_done = -1e300;
            for (const auto& hyp : finished) best_done = std::max(best_done, hyp.score());
            if (beams.empty() || best_done >= beams.front().score()) break;
        }
    }
    for (auto& hyp : beams) finished.push_back(hyp);  // length-capped leftovers

    const Hypothesis* best = nullptr;
    for (const auto& hyp : finished)
        if (best == nullptr || hyp.score() > best->score()) best = &hyp;
    if (best == nullptr) throw std::runtime_error("beam search produced no hypothesis");

    if (recorder) {
        GateRecordFn dec_rec = [&](const GateDecision& d) {
            recorder->record(d, sample.src_lang, sample.tgt_lang, Side::decoder);
        };
        model.decoder_logits(memory, best->tokens, mask, dec_rec);
    }

    std::vector<std::string> out;
    for (size_t i = 1; i < best->tokens.size(); ++i)
        out.push_back(vocab.token_string(best->tokens[i]));
    return out;
}

}  // namespace moeprune
