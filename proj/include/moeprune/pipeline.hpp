#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "moeprune/data.hpp"
#include "moeprune/eval.hpp"
#include "moeprune/ini.hpp"
#include "moeprune/prune.hpp"
#include "moeprune/stats.hpp"
#include "moeprune/train.hpp"

namespace moeprune {

enum class PruneAlgo { fixed, global_threshold, encdec_threshold };

PruneAlgo algo_from_name(const std::string& s);
const char* algo_name(PruneAlgo a);

struct PruneSpec {
    MetricKind metric = MetricKind::importance;
    PruneAlgo algo = PruneAlgo::fixed;
    Granularity granularity = Granularity::lang_pair;
    double rate = 0.5;  // fraction of experts removed
    std::string split = "balanced";
    int min_per_layer = 4;

    // Retained expert count for `rate` over a layout; errors when the rate
    // does not land on a whole number of experts.
    int retain_total(const MoeLayout& layout) const;
    std::string tag() const;  // metric_algo_granularity_rate, used in paths
};

struct PipelineConfig {
    CorpusGenConfig data;
    ModelConfig model;  // vocab_size is derived from data
    TrainOptions train;
    PruneSpec prune;
    std::string out_dir = "run";

    static PipelineConfig from_ini(const IniData& ini);
    static PipelineConfig from_file(const std::string& path);
    std::vector<std::string> language_codes() const;
    std::vector<std::pair<std::string, std::string>> directions() const;
};

// Parses "CODE:SEED:TRANSFORM, ..." into language specs.
std::vector<LanguageSpec> parse_languages(const std::string& s);

// Total encoder/decoder retention counts implied by a budget split.
std::pair<int, int> budget_side_counts(const Budget& budget, const MoeLayout& layout);

// Normalized metric table over all MoE layers, combining the encoder and
// decoder statistics of one granularity key pair.
MetricTable combined_metric_table(const ExpertStats& enc_stats, const ExpertStats& dec_stats,
                                  MetricKind kind, const std::string& key_label);

// One pruning mask per translation direction, derived from per-direction raw
// routing statistics at the requested granularity.
std::map<std::pair<std::string, std::string>, PruningMask> build_masks(
    const StatsMap& per_direction, const MoeLayout& layout, const PruneSpec& spec,
    const std::vector<std::pair<std::string, std::string>>& directions);

struct PipelineResult {
    EvalReport baseline;
    EvalReport pruned;
    double valid_accuracy = 0.0;
    std::map<std::pair<std::string, std::string>, PruningMask> masks;
};

// Full run: data -> train -> valid decode with stats -> prune -> test decode
// -> evaluation and analysis artifacts under cfg.out_dir. Finished stages
// are skipped when their inputs are unchanged.
PipelineResult run_pipeline(const PipelineConfig& cfg, bool force = false,
                            bool quiet = false);

// FNV-1a hash of a byte string; used for stage staleness stamps.
std::uint64_t fnv1a(const std::string& bytes);
std::uint64_t fnv1a_file(const std::string& path);

}  // namespace moeprune
