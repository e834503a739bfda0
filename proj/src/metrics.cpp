#include "moeprune/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace moeprune {

MetricKind metric_from_name(const std::string& s) {
    if (s == "top1") return MetricKind::top1;
    if (s == "top2") return MetricKind::top2;
    if (s == "lb" || s == "load_balancing") return MetricKind::load_balancing;
    if (s == "importance-vanilla" || s == "importance_vanilla")
        return MetricKind::importance_vanilla;
    if (s == "importance") return MetricKind::importance;
    throw std::invalid_argument("unknown metric kind: " + s);
}

const char* metric_name(MetricKind k) {
    switch (k) {
        case MetricKind::top1: return "top1";
        case MetricKind::top2: return "top2";
        case MetricKind::load_balancing: return "load_balancing";
        case MetricKind::importance_vanilla: return "importance_vanilla";
        case MetricKind::importance: return "importance";
    }
    return "?";
}

MetricTable compute_metric(const FinalizedStats& stats, MetricKind kind) {
    MetricTable table;
    table.kind = kind;
    table.normalized = false;
    for (const auto& [layer_id, f] : stats.layers) {
        const int N = static_cast<int>(f.top1.size());
        Eigen::VectorXd scores(N);
        for (int e = 0; e < N; ++e) {
            switch (kind) {
                case MetricKind::top1: scores(e) = f.top1(e); break;
                case MetricKind::top2: scores(e) = f.top2(e); break;
                case MetricKind::load_balancing: scores(e) = f.top1(e) * f.mean(e); break;
                case MetricKind::importance_vanilla:
                    scores(e) = f.top1(e) * f.conf(e);
                    break;
                case MetricKind::importance:
                    scores(e) = f.top1(e) * std::exp(f.conf(e));
                    break;
            }
        }
        table.layers[layer_id] = std::move(scores);
    }
    return table;
}

MetricTable normalize_per_layer(const MetricTable& table) {
    MetricTable out;
    out.kind = table.kind;
    out.normalized = true;
    for (const auto& [layer_id, scores] : table.layers) {
        double total = scores.sum();
        if (total <= 0.0)
            throw std::runtime_error("normalize_per_layer: layer " +
                                     std::to_string(layer_id) + " has no positive score");
        out.layers[layer_id] = scores / total;
    }
    return out;
}

}  // namespace moeprune
