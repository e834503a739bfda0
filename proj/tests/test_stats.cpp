#include <doctest.h>

#include <random>
#include <sstream>

#include "moeprune/stats.hpp"

using namespace moeprune;

namespace {

GateDecision random_decision(std::mt19937_64& rng, int layer, int n_experts) {
    std::gamma_distribution<double> gamma(0.7, 1.0);
    Eigen::VectorXd p(n_experts);
    for (int e = 0; e < n_experts; ++e) p(e) = gamma(rng) + 1e-9;
    p /= p.sum();
    int top1 = 0, top2 = 1;
    for (int e = 0; e < n_experts; ++e)
        if (p(e) > p(top1)) top1 = e;
    top2 = top1 == 0 ? 1 : 0;
    for (int e = 0; e < n_experts; ++e)
        if (e != top1 && p(e) > p(top2)) top2 = e;
    GateDecision d;
    d.layer_id = layer;
    d.gate_probs = p;
    d.top1 = top1;
    d.top2 = top2;
    d.gate_top1 = p(top1);
    d.gate_top2 = p(top2);
    return d;
}

}  // namespace

TEST_CASE("finalized fractions satisfy the routing identities") {
    const int N = 8;
    std::mt19937_64 rng(3);
    ExpertStats stats;
    stats.num_experts = N;
    for (int t = 0; t < 5000; ++t)
        for (int layer : {0, 1}) stats.record(random_decision(rng, layer, N));
    FinalizedStats fin = finalize(stats);
    for (const auto& [layer, f] : fin.layers) {
        CHECK(f.top1.sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(f.top2.sum() == doctest::Approx(2.0).epsilon(1e-9));
        CHECK(f.mean.sum() == doctest::Approx(1.0).epsilon(1e-6));
        for (int e = 0; e < N; ++e) {
            CHECK(f.conf(e) >= 0.0);
            CHECK(f.conf(e) <= 1.0);
        }
    }
}

TEST_CASE("merge is exact and order-independent on counters") {
    const int N = 4;
    std::mt19937_64 rng(11);
    std::vector<ExpertStats> parts(3);
    for (auto& p : parts) {
        p.num_experts = N;
        for (int t = 0; t < 100; ++t) p.record(random_decision(rng, 0, N));
    }
    ExpertStats ab = merge(merge(parts[0], parts[1]), parts[2]);
    ExpertStats ba = merge(parts[2], merge(parts[1], parts[0]));
    const auto& la = ab.layers.at(0);
    const auto& lb = ba.layers.at(0);
    CHECK(la.token_count == lb.token_count);
    for (int e = 0; e < N; ++e) {
        CHECK(la.experts[e].top1_count == lb.experts[e].top1_count);
        CHECK(la.experts[e].top2_count == lb.experts[e].top2_count);
        CHECK(la.experts[e].gate_sum == doctest::Approx(lb.experts[e].gate_sum));
        CHECK(la.experts[e].conf_sum == doctest::Approx(lb.experts[e].conf_sum));
    }
}

TEST_CASE("conf is zero for experts never ranked first") {
    ExpertStats stats;
    stats.num_experts = 3;
    GateDecision d;
    d.layer_id = 0;
    d.gate_probs = Eigen::Vector3d(0.7, 0.2, 0.1);
    d.top1 = 0;
    d.top2 = 1;
    d.gate_top1 = 0.7;
    d.gate_top2 = 0.2;
    stats.record(d);
    FinalizedStats fin = finalize(stats);
    CHECK(fin.layers.at(0).conf(0) == doctest::Approx(0.7));
    CHECK(fin.layers.at(0).conf(1) == 0.0);
    CHECK(fin.layers.at(0).conf(2) == 0.0);
    CHECK(fin.layers.at(0).top2(1) == doctest::Approx(1.0));
}

TEST_CASE("finalize rejects empty layers and empty stats") {
    ExpertStats stats;
    stats.num_experts = 2;
    CHECK_THROWS(finalize(stats, "some-key"));
}

TEST_CASE("stats key validation per granularity") {
    StatsKey ok_pair{Granularity::lang_pair, Side::encoder, "aa", "bb"};
    CHECK_NOTHROW(ok_pair.validate());
    StatsKey bad_global{Granularity::global, Side::encoder, "aa", ""};
    CHECK_THROWS(bad_global.validate());
    StatsKey ok_global{Granularity::global, Side::decoder, "", ""};
    CHECK_NOTHROW(ok_global.validate());
    StatsKey enc_lang{Granularity::lang_specific, Side::encoder, "aa", ""};
    CHECK_NOTHROW(enc_lang.validate());
    StatsKey bad_enc_lang{Granularity::lang_specific, Side::encoder, "", "bb"};
    CHECK_THROWS(bad_enc_lang.validate());
    StatsKey dec_lang{Granularity::lang_specific, Side::decoder, "", "bb"};
    CHECK_NOTHROW(dec_lang.validate());
}

TEST_CASE("aggregation merges counters, never fractions") {
    const int N = 4;
    std::mt19937_64 rng(21);
    StatsRecorder rec(N);
    std::vector<std::pair<std::string, std::string>> dirs = {{"aa", "bb"}, {"bb", "aa"}};
    // uneven token counts per direction make fraction-averaging detectable
    for (int t = 0; t < 50; ++t)
        rec.record(random_decision(rng, 0, N), "aa", "bb", Side::encoder);
    for (int t = 0; t < 250; ++t)
        rec.record(random_decision(rng, 0, N), "bb", "aa", Side::encoder);
    for (int t = 0; t < 30; ++t) {
        rec.record(random_decision(rng, 1, N), "aa", "bb", Side::decoder);
        rec.record(random_decision(rng, 1, N), "bb", "aa", Side::decoder);
    }

    StatsMap global = aggregate_by_granularity(rec.per_direction(), Granularity::global, dirs);
    StatsKey genc{Granularity::global, Side::encoder, "", ""};
    const auto& enc_layer = global.at(genc).layers.at(0);
    CHECK(enc_layer.token_count == 300);
    std::uint64_t top1_total = 0;
    for (const auto& e : enc_layer.experts) top1_total += e.top1_count;
    CHECK(top1_total == 300);

    StatsMap by_lang =
        aggregate_by_granularity(rec.per_direction(), Granularity::lang_specific, dirs);
    StatsKey enc_aa{Granularity::lang_specific, Side::encoder, "aa", ""};
    StatsKey dec_bb{Granularity::lang_specific, Side::decoder, "", "bb"};
    CHECK(by_lang.at(enc_aa).layers.at(0).token_count == 50);
    CHECK(by_lang.at(dec_bb).layers.at(1).token_count == 30);
}

TEST_CASE("aggregation reports missing directions by name") {
    StatsRecorder rec(2);
    std::mt19937_64 rng(1);
    rec.record(random_decision(rng, 0, 2), "aa", "bb", Side::encoder);
    std::vector<std::pair<std::string, std::string>> dirs = {{"aa", "bb"}, {"cc", "aa"}};
    try {
        aggregate_by_granularity(rec.per_direction(), Granularity::global, dirs);
        FAIL("expected an error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("cc") != std::string::npos);
    }
}

TEST_CASE("stats file round-trip preserves counters exactly") {
    const int N = 4;
    std::mt19937_64 rng(31);
    StatsRecorder rec(N);
    for (int t = 0; t < 100; ++t) {
        rec.record(random_decision(rng, 0, N), "aa", "bb", Side::encoder);
        rec.record(random_decision(rng, 2, N), "aa", "bb", Side::decoder);
    }
    std::stringstream ss;
    write_stats(ss, rec.per_direction());
    StatsMap back = read_stats(ss);
    REQUIRE(back.size() == rec.per_direction().size());
    for (const auto& [key, stats] : rec.per_direction()) {
        const auto& other = back.at(key);
        for (const auto& [layer, ls] : stats.layers) {
            const auto& lo = other.layers.at(layer);
            CHECK(ls.token_count == lo.token_count);
            for (int e = 0; e < N; ++e) {
                CHECK(ls.experts[e].top1_count == lo.experts[e].top1_count);
                CHECK(ls.experts[e].top2_count == lo.experts[e].top2_count);
                CHECK(ls.experts[e].gate_sum == lo.experts[e].gate_sum);
                CHECK(ls.experts[e].conf_sum == lo.experts[e].conf_sum);
            }
        }
    }
}

TEST_CASE("granularity names accept the documented aliases") {
    CHECK(granularity_from_name("global") == Granularity::global);
    CHECK(granularity_from_name("lang-pair") == Granularity::lang_pair);
    CHECK(granularity_from_name("lang_pair") == Granularity::lang_pair);
    CHECK(granularity_from_name("lang") == Granularity::lang_specific);
    CHECK_THROWS(granularity_from_name("nope"));
}
