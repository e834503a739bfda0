#include <doctest.h>

#include "moeprune/beam.hpp"
#include "moeprune/data.hpp"
#include "moeprune/model.hpp"

using namespace moeprune;

namespace {

ModelConfig tiny_config(int vocab_size) {
    ModelConfig cfg;
    cfg.vocab_size = vocab_size;
    cfg.d_model = 16;
    cfg.d_ffn = 32;
    cfg.n_heads = 2;
    cfg.enc_layers = 2;
    cfg.dec_layers = 2;
    cfg.moe_frequency = 2;
    cfg.num_experts = 4;
    return cfg;
}

CorpusSample sample_of(const Vocab& v, std::initializer_list<int> base_ids) {
    CorpusSample s;
    s.src_lang = "aa";
    s.tgt_lang = "bb";
    for (int b : base_ids) s.src_tokens.push_back(v.token_string(v.base_token(b)));
    return s;
}

// Reference greedy decoder over the public model interface.
std::vector<std::string> greedy(const MoEModel& model, const Vocab& v,
                                const CorpusSample& s) {
    ag::NoGradGuard no_grad;
    ag::Var memory = model.encode(encoder_input(v, s));
    std::vector<int> dec = {v.lang_token(s.tgt_lang)};
    const int max_len = 2 * static_cast<int>(s.src_tokens.size()) + 8;
    for (int step = 0; step < max_len; ++step) {
        ag::Var logits = model.decoder_logits(memory, dec);
        Eigen::VectorXd row = logits->value.row(logits->value.rows() - 1);
        Eigen::Index argmax;
        row.maxCoeff(&argmax);
        if (static_cast<int>(argmax) == v.eos()) break;
        dec.push_back(static_cast<int>(argmax));
    }
    std::vector<std::string> out;
    for (size_t i = 1; i < dec.size(); ++i) out.push_back(v.token_string(dec[i]));
    return out;
}

}  // namespace

TEST_CASE("beam size 1 equals greedy decoding") {
    Vocab v({"aa", "bb"}, 8);
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        MoEModel model(tiny_config(v.size()), seed);
        CorpusSample s = sample_of(v, {0, 3, 5, 1});
        CHECK(translate_beam(model, v, s, nullptr, nullptr, /*beam=*/1) ==
              greedy(model, v, s));
    }
}

TEST_CASE("full mask decodes token-identically to no mask") {
    Vocab v({"aa", "bb"}, 8);
    MoEModel model(tiny_config(v.size()), 9);
    PruningMask full = PruningMask::full(model.layout());
    for (auto ids : {std::initializer_list<int>{2, 2, 7}, {0, 1, 2, 3, 4}, {6}}) {
        CorpusSample s = sample_of(v, ids);
        CHECK(translate_beam(model, v, s, nullptr) == translate_beam(model, v, s, &full));
    }
}

TEST_CASE("decoding is deterministic, including the recorded gate stream") {
    Vocab v({"aa", "bb"}, 8);
    MoEModel model(tiny_config(v.size()), 4);
    CorpusSample s = sample_of(v, {1, 4, 2, 6});

    StatsRecorder r1(4), r2(4);
    auto h1 = translate_beam(model, v, s, nullptr, &r1);
    auto h2 = translate_beam(model, v, s, nullptr, &r2);
    CHECK(h1 == h2);

    REQUIRE(r1.per_direction().size() == 2);  // encoder and decoder keys
    for (const auto& [key, stats] : r1.per_direction()) {
        const auto& other = r2.per_direction().at(key);
        for (const auto& [layer, ls] : stats.layers) {
            const auto& lo = other.layers.at(layer);
            CHECK(ls.token_count == lo.token_count);
            for (size_t e = 0; e < ls.experts.size(); ++e) {
                CHECK(ls.experts[e].top1_count == lo.experts[e].top1_count);
                CHECK(ls.experts[e].gate_sum == lo.experts[e].gate_sum);
            }
        }
    }

    // encoder stats cover language token + source + eos, once per MoE layer
    StatsKey enc_key{Granularity::lang_pair, Side::encoder, "aa", "bb"};
    const auto& enc = r1.per_direction().at(enc_key);
    for (const auto& [layer, ls] : enc.layers)
        CHECK(ls.token_count == s.src_tokens.size() + 2);
    // decoder stats cover exactly the selected hypothesis
    StatsKey dec_key{Granularity::lang_pair, Side::decoder, "aa", "bb"};
    const auto& dec = r1.per_direction().at(dec_key);
    for (const auto& [layer, ls] : dec.layers) CHECK(ls.token_count == h1.size() + 1);
}

TEST_CASE("output length respects the cap") {
    Vocab v({"aa", "bb"}, 8);
    MoEModel model(tiny_config(v.size()), 2);
    CorpusSample s = sample_of(v, {3});
    auto hyp = translate_beam(model, v, s);
    CHECK(hyp.size() <= 2 * s.src_tokens.size() + 8);
}

TEST_CASE("unknown language codes are rejected") {
    Vocab v({"aa", "bb"}, 8);
    MoEModel model(tiny_config(v.size()), 1);
    CorpusSample s = sample_of(v, {1, 2});
    s.tgt_lang = "zz";
    CHECK_THROWS(translate_beam(model, v, s));
    s.tgt_lang = "bb";
    s.src_lang = "qq";
    CHECK_THROWS(translate_beam(model, v, s));
}
