#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "moeprune/analysis.hpp"
#include "moeprune/chrf.hpp"
#include "moeprune/data.hpp"
#include "moeprune/memory.hpp"
#include "moeprune/metrics.hpp"
#include "moeprune/pipeline.hpp"
#include "moeprune/prune.hpp"

namespace py = pybind11;
using namespace moeprune;

namespace {

// Interprets one score list per MoE layer (single stack, layer ids 0..L-1).
std::pair<MetricTable, MoeLayout> table_from(const std::vector<std::vector<double>>& scores) {
    if (scores.empty()) throw std::invalid_argument("need at least one layer of scores");
    const int N = static_cast<int>(scores[0].size());
    MoeLayout layout = MoeLayout::build(static_cast<int>(scores.size()), 0, 1, N);
    MetricTable t;
    t.kind = MetricKind::importance;
    for (size_t l = 0; l < scores.size(); ++l) {
        if (static_cast<int>(scores[l].size()) != N)
            throw std::invalid_argument("all layers must list the same number of experts");
        Eigen::VectorXd v(N);
        for (int e = 0; e < N; ++e) v(e) = scores[l][e];
        t.layers[static_cast<int>(l)] = v;
    }
    return {normalize_per_layer(t), layout};
}

std::vector<std::vector<int>> retained_lists(const PruningMask& mask) {
    std::vector<std::vector<int>> out;
    for (const auto& [layer, ids] : mask.retained) out.push_back(ids);
    return out;
}

ExpertSet set_from(const std::vector<std::pair<int, int>>& experts) {
    ExpertSet s;
    s.experts.insert(experts.begin(), experts.end());
    return s;
}

}  // namespace

PYBIND11_MODULE(_moeprune, m) {
    m.doc() = "Expert pruning toolkit for mixture-of-experts translation models";

    py::class_<ChrfParams>(m, "ChrfParams")
        .def(py::init<>())
        .def_readwrite("char_ngram_max", &ChrfParams::char_ngram_max)
        .def_readwrite("word_ngram_max", &ChrfParams::word_ngram_max)
        .def_readwrite("beta", &ChrfParams::beta);
    m.def("chrf_pp", &chrf_pp, py::arg("hypotheses"), py::arg("references"),
          py::arg("params") = ChrfParams{},
          "Corpus chrF++ with micro-averaged n-gram statistics.");
    m.def("chrf_pp_segment", &chrf_pp_segment, py::arg("hypothesis"),
          py::arg("references"), py::arg("params") = ChrfParams{});

    m.def(
        "estimate_memory_gib",
        [](std::int64_t total_params, std::int64_t expert_params_each,
           std::int64_t num_experts_total, int bytes_per_param,
           std::optional<std::int64_t> retained) {
            MemorySpec spec{total_params, expert_params_each, num_experts_total,
                            bytes_per_param};
            return retained ? estimate_memory_retained(spec, *retained).gib
                            : estimate_memory(spec).gib;
        },
        py::arg("total_params"), py::arg("expert_params_each") = 0,
        py::arg("num_experts_total") = 0, py::arg("bytes_per_param") = 2,
        py::arg("retained") = py::none(),
        "GiB footprint of a model, optionally with only `retained` experts kept.");

    m.def(
        "fixed_per_layer",
        [](const std::vector<std::vector<double>>& scores, int count, int min_per_layer) {
            auto [t, layout] = table_from(scores);
            Budget b = Budget::parse_split("balanced", count, min_per_layer);
            return retained_lists(prune_fixed_per_layer(t, layout, b));
        },
        py::arg("scores"), py::arg("count"), py::arg("min_per_layer") = 4,
        "Equal per-layer retention of the top-scoring experts.");
    m.def(
        "global_threshold",
        [](const std::vector<std::vector<double>>& scores, int count, int min_per_layer) {
            auto [t, layout] = table_from(scores);
            return retained_lists(prune_global_threshold(t, layout, count, min_per_layer));
        },
        py::arg("scores"), py::arg("count"), py::arg("min_per_layer") = 4,
        "Shared cumulative-mass threshold over all layers; retains exactly `count`.");

    m.def(
        "jaccard",
        [](const std::vector<std::pair<int, int>>& a,
           const std::vector<std::pair<int, int>>& b) {
            return jaccard(set_from(a), set_from(b));
        },
        py::arg("a"), py::arg("b"),
        "Jaccard similarity of two (layer, expert) id sets.");

    m.def(
        "newick",
        [](const std::vector<std::string>& labels,
           const std::vector<std::vector<double>>& points) {
            std::vector<Eigen::VectorXd> pts;
            for (const auto& p : points) {
                Eigen::VectorXd v(p.size());
                for (size_t i = 0; i < p.size(); ++i) v(static_cast<Eigen::Index>(i)) = p[i];
                pts.push_back(std::move(v));
            }
            return to_newick(hcluster_points(labels, pts));
        },
        py::arg("labels"), py::arg("points"),
        "Average-linkage dendrogram of labeled points as a Newick string.");

    m.def("cipher_permutation", &cipher_permutation, py::arg("seed"), py::arg("base_vocab"),
          "Deterministic token-substitution table of one synthetic language.");

    m.def(
        "run_pipeline",
        [](const std::string& config_path, bool force, bool quiet) {
            PipelineResult r = run_pipeline(PipelineConfig::from_file(config_path), force,
                                            quiet);
            py::dict out;
            out["valid_accuracy"] = r.valid_accuracy;
            out["baseline_chrf"] = r.baseline.avg_chrf;
            out["pruned_chrf"] = r.pruned.avg_chrf;
            out["num_masks"] = r.masks.size();
            return out;
        },
        py::arg("config_path"), py::arg("force") = false, py::arg("quiet") = true,
        "End-to-end run from an INI config; returns summary numbers.");
}
