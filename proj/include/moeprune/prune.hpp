#pragma once

#include <cstdint>
#include <string>

#include "moeprune/mask.hpp"
#include "moeprune/metrics.hpp"

namespace moeprune {

enum class BudgetSplit { balanced, ratio, explicit_counts };

struct Budget {
    int total_retain = 0;
    BudgetSplit split = BudgetSplit::balanced;
    int enc_ratio = 1, dec_ratio = 1;     // for ratio split
    int enc_count = 0, dec_count = 0;     // for explicit split
    int min_per_layer = 4;

    // Per-layer quotas implied by the split; errors on non-integral quotas.
    std::pair<int, int> per_layer_quotas(const MoeLayout& layout) const;  // (enc, dec)
    // Parses "balanced", "ratio=E:D" or "explicit=E,D".
    static Budget parse_split(const std::string& s, int total_retain, int min_per_layer);
};

// Keeps the top-quota experts of every layer by metric, ties by lower id.
PruningMask prune_fixed_per_layer(const MetricTable& table, const MoeLayout& layout,
                                  const Budget& budget);

// Shared-threshold pruning: scans theta over {0, 0.001, ..., 1} and keeps,
// per layer, the smallest top set whose cumulative normalized metric reaches
// theta (floored at min_per_layer); the largest theta not exceeding `count`
// wins and the residual budget goes to the best excluded experts.
PruningMask prune_global_threshold(const MetricTable& table, const MoeLayout& layout,
                                   int count, int min_per_layer);

// Runs the threshold procedure independently on encoder and decoder layers.
PruningMask prune_encdec_thresholds(const MetricTable& table, const MoeLayout& layout,
                                    int enc_count, int dec_count, int min_per_layer);

// Uniform random retention with the same per-layer quotas as the fixed
// algorithm; used as a pruning-quality baseline.
PruningMask random_mask(const MoeLayout& layout, const Budget& budget, std::uint64_t seed);

// Per-layer expert order by (metric desc, id asc).
std::vector<int> metric_order(const Eigen::VectorXd& scores);

}  // namespace moeprune
