#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>

#include "moeprune/stats.hpp"

namespace moeprune {

enum class MetricKind { top1, top2, load_balancing, importance_vanilla, importance };

MetricKind metric_from_name(const std::string& s);
const char* metric_name(MetricKind k);

// Per-layer expert scores for one metric kind.
struct MetricTable {
    MetricKind kind = MetricKind::importance;
    bool normalized = false;
    std::map<int, Eigen::VectorXd> layers;  // global MoE layer id -> N scores
};

// Raw (unnormalized) metric values from finalized statistics.
//   top1               -> top1(e)
//   top2               -> top2(e)
//   load_balancing     -> top1(e) * mean(e)
//   importance_vanilla -> top1(e) * conf(e)
//   importance         -> top1(e) * exp(conf(e))
MetricTable compute_metric(const FinalizedStats& stats, MetricKind kind);

// Divides each layer by its sum; an all-zero layer is an error.
MetricTable normalize_per_layer(const MetricTable& table);

}  // namespace moeprune
