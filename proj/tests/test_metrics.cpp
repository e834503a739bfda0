#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "moeprune/metrics.hpp"

using namespace moeprune;

namespace {

FinalizedStats two_expert_layer(double top1_a, double conf_a, double top1_b, double conf_b) {
    FinalizedStats fin;
    fin.num_experts = 2;
    FinalizedLayer layer;
    layer.top1 = Eigen::Vector2d(top1_a, top1_b);
    layer.top2 = Eigen::Vector2d(1.0, 1.0);
    layer.mean = Eigen::Vector2d(0.5, 0.5);
    layer.conf = Eigen::Vector2d(conf_a, conf_b);
    fin.layers[0] = layer;
    return fin;
}

std::vector<int> argsort_desc(const Eigen::VectorXd& v) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return v(a) > v(b); });
    return idx;
}

}  // namespace

TEST_CASE("metric formulas by hand") {
    FinalizedStats fin = two_expert_layer(0.5, 0.8, 0.0, 0.0);
    CHECK(compute_metric(fin, MetricKind::importance_vanilla).layers.at(0)(0) ==
          doctest::Approx(0.40));
    CHECK(compute_metric(fin, MetricKind::importance).layers.at(0)(0) ==
          doctest::Approx(0.5 * std::exp(0.8)).epsilon(1e-12));
    CHECK(compute_metric(fin, MetricKind::importance).layers.at(0)(0) ==
          doctest::Approx(1.1128).epsilon(1e-4));
    CHECK(compute_metric(fin, MetricKind::top1).layers.at(0)(0) == doctest::Approx(0.5));
    CHECK(compute_metric(fin, MetricKind::load_balancing).layers.at(0)(0) ==
          doctest::Approx(0.5 * 0.5));
}

TEST_CASE("top1 = 0 zeroes the selection metrics") {
    FinalizedStats fin = two_expert_layer(1.0, 0.9, 0.0, 0.0);
    for (MetricKind kind : {MetricKind::top1, MetricKind::load_balancing,
                            MetricKind::importance_vanilla, MetricKind::importance})
        CHECK(compute_metric(fin, kind).layers.at(0)(1) == 0.0);
}

TEST_CASE("metric orderings can disagree across kinds") {
    // experts (top1, conf) = (0.30, 0.90) and (0.35, 0.10)
    FinalizedStats fin = two_expert_layer(0.30, 0.90, 0.35, 0.10);
    auto vanilla = compute_metric(fin, MetricKind::importance_vanilla).layers.at(0);
    auto imp = compute_metric(fin, MetricKind::importance).layers.at(0);
    auto top1 = compute_metric(fin, MetricKind::top1).layers.at(0);
    CHECK(vanilla(0) == doctest::Approx(0.270));
    CHECK(vanilla(1) == doctest::Approx(0.035));
    CHECK(imp(0) == doctest::Approx(0.7378).epsilon(1e-4));
    CHECK(imp(1) == doctest::Approx(0.3868).epsilon(1e-4));
    CHECK(vanilla(0) > vanilla(1));
    CHECK(imp(0) > imp(1));
    CHECK(top1(1) > top1(0));  // activity alone flips the ranking
}

TEST_CASE("normalize_per_layer sums to one and preserves ordering") {
    MetricTable t;
    t.kind = MetricKind::top1;
    t.layers[3] = Eigen::Vector3d(1.0, 1.0, 2.0);
    MetricTable n = normalize_per_layer(t);
    CHECK(n.normalized);
    CHECK(n.layers.at(3)(0) == doctest::Approx(0.25));
    CHECK(n.layers.at(3)(1) == doctest::Approx(0.25));
    CHECK(n.layers.at(3)(2) == doctest::Approx(0.50));

    MetricTable again = normalize_per_layer(n);
    CHECK((again.layers.at(3) - n.layers.at(3)).norm() == doctest::Approx(0.0));

    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.01, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        MetricTable raw;
        raw.kind = MetricKind::importance;
        Eigen::VectorXd v(8);
        for (int e = 0; e < 8; ++e) v(e) = u(rng);
        raw.layers[0] = v;
        MetricTable norm = normalize_per_layer(raw);
        CHECK(norm.layers.at(0).sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(argsort_desc(v) == argsort_desc(norm.layers.at(0)));
    }
}

TEST_CASE("normalize_per_layer rejects an all-zero layer by name") {
    MetricTable t;
    t.kind = MetricKind::top1;
    t.layers[7] = Eigen::Vector2d(0.0, 0.0);
    try {
        normalize_per_layer(t);
        FAIL("expected an error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("7") != std::string::npos);
    }
}

TEST_CASE("metric names and aliases") {
    CHECK(metric_from_name("top1") == MetricKind::top1);
    CHECK(metric_from_name("top2") == MetricKind::top2);
    CHECK(metric_from_name("lb") == MetricKind::load_balancing);
    CHECK(metric_from_name("importance-vanilla") == MetricKind::importance_vanilla);
    CHECK(metric_from_name("importance") == MetricKind::importance);
    CHECK_THROWS(metric_from_name("bogus"));
}
