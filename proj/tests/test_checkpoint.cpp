#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "moeprune/beam.hpp"
#include "moeprune/checkpoint.hpp"

using namespace moeprune;

TEST_CASE("checkpoint round-trip is bit-exact") {
    Vocab v({"aa", "bb"}, 8);
    ModelConfig cfg;
    cfg.vocab_size = v.size();
    cfg.d_model = 16;
    cfg.d_ffn = 32;
    cfg.n_heads = 2;
    cfg.enc_layers = 2;
    cfg.dec_layers = 2;
    cfg.moe_frequency = 2;
    cfg.num_experts = 4;
    MoEModel model(cfg, 21);

    std::string path =
        (std::filesystem::temp_directory_path() / "moeprune_ckpt_test.bin").string();
    save_checkpoint(path, model);
    MoEModel back = load_checkpoint(path);

    CHECK(back.config().vocab_size == cfg.vocab_size);
    CHECK(back.config().d_model == cfg.d_model);
    CHECK(back.config().num_experts == cfg.num_experts);
    CHECK(back.config().moe_frequency == cfg.moe_frequency);
    CHECK(back.config().beam_size == cfg.beam_size);
    CHECK(back.config().label_smoothing == cfg.label_smoothing);
    CHECK(back.config().lb_loss_coeff == cfg.lb_loss_coeff);

    const auto& a = model.named_parameters();
    const auto& b = back.named_parameters();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        REQUIRE(a[i].second->value.rows() == b[i].second->value.rows());
        REQUIRE(a[i].second->value.cols() == b[i].second->value.cols());
        CHECK(a[i].second->value == b[i].second->value);  // bitwise
    }

    // behavioral equality on a decode
    CorpusSample s;
    s.src_lang = "aa";
    s.tgt_lang = "bb";
    for (int t : {0, 5, 2}) s.src_tokens.push_back(v.token_string(v.base_token(t)));
    CHECK(translate_beam(model, v, s) == translate_beam(back, v, s));
    std::remove(path.c_str());
}

TEST_CASE("checkpoint loading rejects a bad magic string") {
    std::string path =
        (std::filesystem::temp_directory_path() / "moeprune_bad_ckpt.bin").string();
    std::ofstream(path) << "NOTAMODEL garbage";
    CHECK_THROWS(load_checkpoint(path));
    std::remove(path.c_str());
    CHECK_THROWS(load_checkpoint("/nonexistent/path/ckpt.bin"));
}
