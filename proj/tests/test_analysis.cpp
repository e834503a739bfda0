#include <doctest.h>

#include <algorithm>
#include <random>

#include "moeprune/analysis.hpp"

using namespace moeprune;

namespace {

ExpertSet make_set(Side side, std::initializer_list<std::pair<int, int>> experts) {
    ExpertSet s;
    s.side = side;
    for (const auto& e : experts) s.experts.insert(e);
    return s;
}

// Independent average-linkage oracle: clusters carry their member indices and
// a canonical topology string; every merge picks the smallest average
// pairwise distance.
struct OracleCluster {
    std::vector<int> members;
    std::string canon;
    std::string min_label;
};

std::pair<std::string, std::vector<double>> oracle_upgma(
    const std::vector<std::string>& labels, const std::vector<Eigen::VectorXd>& pts) {
    const int n = static_cast<int>(pts.size());
    std::vector<OracleCluster> cl;
    for (int i = 0; i < n; ++i) cl.push_back({{i}, labels[i], labels[i]});
    std::vector<double> heights;
    while (cl.size() > 1) {
        double best = 0.0;
        size_t bi = 0, bj = 0;
        bool first = true;
        for (size_t i = 0; i < cl.size(); ++i) {
            for (size_t j = i + 1; j < cl.size(); ++j) {
                double sum = 0.0;
                for (int a : cl[i].members)
                    for (int b : cl[j].members) sum += (pts[a] - pts[b]).norm();
                double d = sum / (cl[i].members.size() * cl[j].members.size());
                auto key = std::minmax(cl[i].min_label, cl[j].min_label);
                auto best_key = std::minmax(cl[bi].min_label, cl[bj].min_label);
                if (first || d < best || (d == best && key < best_key)) {
                    best = d;
                    bi = i;
                    bj = j;
                    first = false;
                }
            }
        }
        heights.push_back(best);
        OracleCluster merged;
        merged.members = cl[bi].members;
        merged.members.insert(merged.members.end(), cl[bj].members.begin(),
                              cl[bj].members.end());
        std::string a = cl[bi].canon, b = cl[bj].canon;
        if (b < a) std::swap(a, b);
        merged.canon = "(" + a + "," + b + ")";
        merged.min_label = std::min(cl[bi].min_label, cl[bj].min_label);
        cl.erase(cl.begin() + bj);
        cl.erase(cl.begin() + bi);
        cl.push_back(std::move(merged));
    }
    return {cl[0].canon, heights};
}

}  // namespace

TEST_CASE("jaccard similarity properties") {
    ExpertSet a = make_set(Side::encoder, {{0, 1}, {0, 2}, {1, 5}});
    CHECK(jaccard(a, a) == 1.0);
    ExpertSet b = make_set(Side::encoder, {{0, 3}, {1, 0}});
    CHECK(jaccard(a, b) == 0.0);
    ExpertSet c = make_set(Side::encoder, {{0, 1}, {0, 2}, {1, 5}, {2, 0}});
    CHECK(jaccard(a, c) == doctest::Approx(3.0 / 4.0));
    CHECK(jaccard(a, c) == jaccard(c, a));
    ExpertSet e1 = make_set(Side::decoder, {});
    ExpertSet e2 = make_set(Side::decoder, {});
    CHECK(jaccard(e1, e2) == 1.0);  // two empty sets count as identical
    ExpertSet dec = make_set(Side::decoder, {{0, 1}});
    CHECK_THROWS(jaccard(a, dec));
}

TEST_CASE("expert sets from a mask keep only the requested side") {
    MoeLayout layout = MoeLayout::build(2, 2, 2, 4);  // global 0 = enc, 1 = dec
    PruningMask mask;
    mask.retained[0] = {0, 2};
    mask.retained[1] = {1, 2, 3};
    ExpertSet enc = ExpertSet::from_mask(mask, layout, Side::encoder);
    ExpertSet dec = ExpertSet::from_mask(mask, layout, Side::decoder);
    CHECK(enc.experts == std::set<std::pair<int, int>>{{0, 0}, {0, 2}});
    CHECK(dec.experts == std::set<std::pair<int, int>>{{1, 1}, {1, 2}, {1, 3}});
}

TEST_CASE("importance vectors concatenate layer-normalized scores") {
    FinalizedStats stats;
    stats.num_experts = 4;
    for (int layer : {1, 3}) {
        FinalizedLayer f;
        f.top1 = Eigen::Vector4d(0.4, 0.3, 0.2, 0.1);
        f.top2 = Eigen::Vector4d(1.0, 0.5, 0.3, 0.2);
        f.mean = Eigen::Vector4d(0.4, 0.3, 0.2, 0.1);
        f.conf = Eigen::Vector4d(0.9, 0.5, 0.4, 0.2);
        stats.layers[layer] = f;
    }
    std::map<std::string, FinalizedStats> per_language = {{"aa", stats}, {"bb", stats}};
    auto vecs = build_importance_vectors(per_language, Side::decoder);
    REQUIRE(vecs.size() == 2);
    CHECK(vecs[0].language == "aa");
    CHECK(vecs[0].values.size() == 8);  // 2 layers x 4 experts
    CHECK(vecs[0].values.head(4).sum() == doctest::Approx(1.0));
    CHECK(vecs[0].values.tail(4).sum() == doctest::Approx(1.0));
    CHECK((vecs[0].values - vecs[1].values).norm() == doctest::Approx(0.0));
    CHECK_THROWS(build_importance_vectors({}, Side::decoder));
}

TEST_CASE("average linkage matches a brute-force oracle on small point sets") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 60; ++trial) {
        int n = 2 + static_cast<int>(rng() % 5);  // 2..6 points
        int dim = 1 + static_cast<int>(rng() % 3);
        std::vector<std::string> labels;
        std::vector<Eigen::VectorXd> pts;
        for (int i = 0; i < n; ++i) {
            labels.push_back(std::string(1, static_cast<char>('A' + i)));
            Eigen::VectorXd p(dim);
            for (int d = 0; d < dim; ++d) p(d) = u(rng);
            pts.push_back(p);
        }
        Dendrogram tree = hcluster_points(labels, pts);
        auto [canon, heights] = oracle_upgma(labels, pts);
        CHECK(topology_of(tree) == canon);
        std::vector<double> tree_heights;
        for (const auto& node : tree.nodes)
            if (!node.leaf) tree_heights.push_back(node.height);
        std::sort(tree_heights.begin(), tree_heights.end());
        std::sort(heights.begin(), heights.end());
        REQUIRE(tree_heights.size() == heights.size());
        for (size_t i = 0; i < heights.size(); ++i)
            CHECK(tree_heights[i] == doctest::Approx(heights[i]).epsilon(1e-12));
        // input order must not matter
        std::vector<std::string> rl(labels.rbegin(), labels.rend());
        std::vector<Eigen::VectorXd> rp(pts.rbegin(), pts.rend());
        CHECK(topology_of(hcluster_points(rl, rp)) == canon);
    }
}

TEST_CASE("newick serialization of a two-leaf tree") {
    Dendrogram tree;
    tree.nodes.push_back({true, "A", 0.0, -1, -1});
    tree.nodes.push_back({true, "B", 0.0, -1, -1});
    tree.nodes.push_back({false, "", 2.0, 0, 1});
    tree.root = 2;
    CHECK(to_newick(tree) == "(A:1,B:1);");
    CHECK(newick_topology("(A:1,B:1);") == "(A,B)");
    CHECK(newick_topology(to_newick(tree)) == topology_of(tree));
    CHECK_THROWS(newick_topology("(A:1,B:1)"));  // missing terminator
}

TEST_CASE("newick round-trips the topology of random trees") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 25; ++trial) {
        int n = 3 + static_cast<int>(rng() % 4);
        std::vector<std::string> labels;
        std::vector<Eigen::VectorXd> pts;
        for (int i = 0; i < n; ++i) {
            labels.push_back("lang" + std::to_string(i));
            Eigen::VectorXd p(2);
            p << u(rng), u(rng);
            pts.push_back(p);
        }
        Dendrogram tree = hcluster_points(labels, pts);
        CHECK(newick_topology(to_newick(tree)) == topology_of(tree));
    }
}

TEST_CASE("dendrogram svg carries every leaf label and its color") {
    std::vector<std::string> labels = {"aa", "bb", "cc"};
    std::vector<Eigen::VectorXd> pts;
    for (double x : {0.0, 0.1, 0.9}) {
        Eigen::VectorXd p(1);
        p << x;
        pts.push_back(p);
    }
    Dendrogram tree = hcluster_points(labels, pts);
    std::string svg = dendrogram_svg(tree, {{"bb", "red"}});
    CHECK(svg.find("<svg") != std::string::npos);
    for (const auto& l : labels) CHECK(svg.find(">" + l + "<") != std::string::npos);
    CHECK(svg.find("fill=\"red\"") != std::string::npos);
    CHECK(svg.find("<line") != std::string::npos);
}

TEST_CASE("length ratios per direction with mean and spread") {
    std::map<std::pair<std::string, std::string>,
             std::pair<std::vector<std::string>, std::vector<std::string>>>
        data;
    data[{"aa", "bb"}] = {{"x y z", "p q"}, {"x y", "p q r"}};        // 5 / 5 = 1.0
    data[{"bb", "aa"}] = {{"a b c d e f"}, {"a b c d"}};              // 6 / 4 = 1.5
    LengthRatioReport r = length_ratio_report(data);
    CHECK(r.per_direction.at({"aa", "bb"}) == doctest::Approx(1.0));
    CHECK(r.per_direction.at({"bb", "aa"}) == doctest::Approx(1.5));
    CHECK(r.mean == doctest::Approx(1.25));
    CHECK(r.stddev == doctest::Approx(0.25));
    data[{"cc", "aa"}] = {{"a"}, {""}};
    CHECK_THROWS(length_ratio_report(data));
}

TEST_CASE("similarity matrix tsv has unit diagonal and symmetric entries") {
    std::vector<std::string> labels = {"aa", "bb"};
    std::vector<ExpertSet> sets = {
        make_set(Side::encoder, {{0, 0}, {0, 1}}),
        make_set(Side::encoder, {{0, 1}, {0, 2}}),
    };
    std::string tsv = similarity_matrix_tsv(labels, sets);
    CHECK(tsv.find("\taa\tbb\n") == 0);
    CHECK(tsv.find("aa\t1.0000\t0.3333") != std::string::npos);
    CHECK(tsv.find("bb\t0.3333\t1.0000") != std::string::npos);
    CHECK_THROWS(similarity_matrix_tsv({"aa"}, sets));
}
