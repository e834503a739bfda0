#include <doctest.h>

#include <cmath>

#include "moeprune/model.hpp"
#include "moeprune/train.hpp"

using namespace moeprune;

namespace {

void set_param(MoEModel& model, const std::string& name, const ag::Mat& value) {
    for (auto& [pname, var] : model.named_parameters()) {
        if (pname == name) {
            REQUIRE(var->value.rows() == value.rows());
            REQUIRE(var->value.cols() == value.cols());
            var->value = value;
            return;
        }
    }
    FAIL("no parameter named ", name);
}

ModelConfig gate_config() {
    ModelConfig cfg;
    cfg.vocab_size = 8;
    cfg.d_model = 2;
    cfg.d_ffn = 2;
    cfg.n_heads = 1;
    cfg.enc_layers = 2;
    cfg.dec_layers = 2;
    cfg.moe_frequency = 2;
    cfg.num_experts = 4;
    return cfg;
}

// Gate logits (2, 1, 0, -1) for x = (1, 0) on the encoder MoE layer.
MoEModel staircase_gate_model() {
    MoEModel model(gate_config(), 5);
    ag::Mat w(2, 4);
    w.row(0) << 2.0, 1.0, 0.0, -1.0;
    w.row(1).setZero();
    set_param(model, "enc.l2.moe.gate", w);
    return model;
}

}  // namespace

TEST_CASE("model reports the full-scale MoE layout") {
    ModelConfig cfg;
    cfg.vocab_size = 4;
    cfg.d_model = 2;
    cfg.d_ffn = 2;
    cfg.n_heads = 1;
    cfg.enc_layers = 24;
    cfg.dec_layers = 24;
    cfg.moe_frequency = 4;
    cfg.num_experts = 128;
    MoEModel model(cfg, 1);
    CHECK(model.layout().num_layers() == 12);
    CHECK(model.layout().total_experts() == 1536);
    CHECK(model.layout().count_side(Side::encoder) == 6);
}

TEST_CASE("gate ties break toward the lowest expert id") {
    ModelConfig cfg = gate_config();
    cfg.num_experts = 2;
    MoEModel model(cfg, 3);
    set_param(model, "enc.l2.moe.gate", ag::Mat::Zero(2, 2));
    GateDecision d = model.gate_forward(Eigen::Vector2d(1.0, -0.5), 0);
    CHECK(d.gate_probs(0) == doctest::Approx(0.5));
    CHECK(d.gate_probs(1) == doctest::Approx(0.5));
    CHECK(d.top1 == 0);
    CHECK(d.top2 == 1);
}

TEST_CASE("gate ranks monotone logits and masks renormalize") {
    MoEModel model = staircase_gate_model();
    Eigen::Vector2d x(1.0, 0.0);

    GateDecision full = model.gate_forward(x, 0);
    CHECK(full.top1 == 0);
    CHECK(full.top2 == 1);
    CHECK(full.gate_top1 > full.gate_top2);
    CHECK(full.gate_probs.sum() == doctest::Approx(1.0).epsilon(1e-9));

    PruningMask mask;
    mask.retained[0] = {2, 3};
    mask.retained[1] = {0, 1, 2, 3};
    GateDecision pruned = model.gate_forward(x, 0, &mask);
    CHECK(pruned.top1 == 2);
    CHECK(pruned.top2 == 3);
    // softmax over the masked logits (0, -1) by hand
    const double p2 = 1.0 / (1.0 + std::exp(-1.0));
    CHECK(pruned.gate_probs(2) == doctest::Approx(p2).epsilon(1e-12));
    CHECK(pruned.gate_probs(2) + pruned.gate_probs(3) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pruned.gate_probs(0) == 0.0);
    CHECK(pruned.gate_probs(1) == 0.0);
}

TEST_CASE("gate errors: non-MoE layer and over-pruned mask") {
    MoEModel model = staircase_gate_model();
    Eigen::Vector2d x(1.0, 0.0);
    CHECK_THROWS(model.gate_forward(x, 7));
    CHECK_THROWS(model.gate_forward(Eigen::Vector3d(1, 2, 3), 0));
    PruningMask starved;
    starved.retained[0] = {2};
    starved.retained[1] = {0, 1};
    CHECK_THROWS(model.gate_forward(x, 0, &starved));
    CHECK_THROWS(model.moe_layer_forward(x, 0, &starved));
}

TEST_CASE("moe_layer_forward reproduces the renormalized weighted sum") {
    // 1-d toy: gates (0.5, 0.25) with E0(x) = 2x and E1(x) = -x give y = x.
    ModelConfig cfg = gate_config();
    cfg.d_model = 1;
    MoEModel model(cfg, 11);
    ag::Mat gate(1, 4);
    gate << std::log(2.0), 0.0, std::log(0.5), std::log(0.5);
    set_param(model, "enc.l2.moe.gate", gate);

    // relu-pair trick: E(x) = a*x for any sign of x
    auto linear_expert = [&](int e, double a) {
        ag::Mat w1(1, 2);
        w1 << 1.0, -1.0;
        ag::Mat w2(2, 1);
        w2 << a, -a;
        std::string prefix = "enc.l2.moe.e" + std::to_string(e);
        set_param(model, prefix + ".w1", w1);
        set_param(model, prefix + ".w2", w2);
    };
    linear_expert(0, 2.0);
    linear_expert(1, -1.0);

    Eigen::VectorXd x(1);
    x << 1.0;
    GateDecision d = model.gate_forward(x, 0);
    CHECK(d.top1 == 0);
    CHECK(d.top2 == 1);
    CHECK(d.gate_top1 == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(d.gate_top2 == doctest::Approx(0.25).epsilon(1e-12));
    Eigen::VectorXd y = model.moe_layer_forward(x, 0);
    CHECK(y(0) == doctest::Approx(1.0).epsilon(1e-12));

    // identical experts: y = E(x) regardless of the gate values
    linear_expert(1, 2.0);
    Eigen::VectorXd same = model.moe_layer_forward(x, 0);
    CHECK(same(0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("load-balancing loss hits its extremes") {
    // One MoE layer; zero ln2 gain makes the gate input a constant row, so
    // the gate logits are fully controlled by the ln2 bias and gate weights.
    ModelConfig cfg;
    cfg.vocab_size = 8;
    cfg.d_model = 2;
    cfg.d_ffn = 2;
    cfg.n_heads = 1;
    cfg.enc_layers = 2;
    cfg.dec_layers = 1;
    cfg.moe_frequency = 2;
    cfg.num_experts = 4;
    MoEModel model(cfg, 7);
    ag::Mat bias(1, 2);
    bias << 1.0, 0.0;
    set_param(model, "enc.l2.ln2.gain", ag::Mat::Zero(1, 2));
    set_param(model, "enc.l2.ln2.bias", bias);

    TrainSample s;
    s.enc_input = {1, 2, 3};
    s.dec_input = {4, 5};
    s.labels = {5, 0};

    SUBCASE("uniform gates give the minimum, 1") {
        set_param(model, "enc.l2.moe.gate", ag::Mat::Zero(2, 4));
        auto [task, lb] = model.loss({s});
        CHECK(lb->value(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("fully concentrated routing gives N") {
        ag::Mat gate = ag::Mat::Zero(2, 4);
        gate(0, 0) = 200.0;
        set_param(model, "enc.l2.moe.gate", gate);
        auto [task, lb] = model.loss({s});
        CHECK(lb->value(0, 0) == doctest::Approx(4.0).epsilon(1e-9));
    }
}

TEST_CASE("empty batches and bad labels are rejected") {
    MoEModel model = staircase_gate_model();
    CHECK_THROWS(model.loss({}));
    TrainSample bad;
    bad.enc_input = {1};
    bad.dec_input = {2};
    bad.labels = {99};
    CHECK_THROWS(model.loss({bad}));
    AdamOptimizer opt(1e-3);
    CHECK_THROWS(training_step(model, opt, {}));
}
