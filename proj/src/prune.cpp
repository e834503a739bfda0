#include "moeprune/prune.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace moeprune {

namespace {

constexpr double kThetaEps = 1e-12;

void check_table(const MetricTable& table, const MoeLayout& layout) {
    if (!table.normalized)
        throw std::invalid_argument("pruning requires a normalized metric table");
    for (const auto& ref : layout.layers) {
        auto it = table.layers.find(ref.global_id);
        if (it == table.layers.end())
            throw std::invalid_argument("metric table missing layer " +
                                        std::to_string(ref.global_id));
        if (static_cast<int>(it->second.size()) != layout.num_experts)
            throw std::invalid_argument("metric table layer " +
                                        std::to_string(ref.global_id) +
                                        " has wrong expert count");
    }
}

std::vector<int> top_quota(const Eigen::VectorXd& scores, int quota) {
    std::vector<int> order = metric_order(scores);
    std::vector<int> keep(order.begin(), order.begin() + quota);
    std::sort(keep.begin(), keep.end());
    return keep;
}

int quota_from(int total, int layers, const std::string& what) {
    if (layers == 0) {
        if (total != 0)
            throw std::invalid_argument(what + " budget is nonzero but there are no " +
                                        what + " MoE layers");
        return 0;
    }
    if (total % layers != 0)
        throw std::invalid_argument(what + " budget " + std::to_string(total) +
                                    " is not divisible by " + std::to_string(layers) +
                                    " layers");
    return total / layers;
}

}  // namespace

std::vector<int> metric_order(const Eigen::VectorXd& scores) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores(a) != scores(b)) return scores(a) > scores(b);
        return a < b;
    });
    return order;
}

std::pair<int, int> Budget::per_layer_quotas(const MoeLayout& layout) const {
    const int enc_layers = layout.count_side(Side::encoder);
    const int dec_layers = layout.count_side(Side::decoder);
    if (total_retain < 1 || total_retain > layout.total_experts())
        throw std::invalid_argument("budget total out of range");

    int enc_total = 0, dec_total = 0;
    switch (split) {
        case BudgetSplit::balanced: {
            int q = quota_from(total_retain, layout.num_layers(), "balanced");
            enc_total = q * enc_layers;
            dec_total = q * dec_layers;
            break;
        }
        case BudgetSplit::ratio: {
            if (enc_ratio < 1 || dec_ratio < 1)
                throw std::invalid_argument("budget ratio parts must be positive");
            long num = static_cast<long>(total_retain) * enc_ratio;
            if (num % (enc_ratio + dec_ratio) != 0)
                throw std::invalid_argument("budget does not split at the requested ratio");
            enc_total = static_cast<int>(num / (enc_ratio + dec_ratio));
            dec_total = total_retain - enc_total;
            break;
        }
        case BudgetSplit::explicit_counts:
            if (enc_count + dec_count != total_retain)
                throw std::invalid_argument("explicit budget counts must sum to the total");
            enc_total = enc_count;
            dec_total = dec_count;
            break;
    }
    int enc_q = quota_from(enc_total, enc_layers, "encoder");
    int dec_q = quota_from(dec_total, dec_layers, "decoder");
    for (auto [q, layers] : {std::pair{enc_q, enc_layers}, std::pair{dec_q, dec_layers}}) {
        if (layers == 0) continue;
        if (q > layout.num_experts)
            throw std::invalid_argument("per-layer quota exceeds expert count");
        if (q < std::min(min_per_layer, layout.num_experts))
            throw std::invalid_argument("per-layer quota below the per-layer floor");
    }
    return {enc_q, dec_q};
}

Budget Budget::parse_split(const std::string& s, int total_retain, int min_per_layer) {
    Budget b;
    b.total_retain = total_retain;
    b.min_per_layer = min_per_layer;
    if (s == "balanced") {
        b.split = BudgetSplit::balanced;
    } else if (s.rfind("ratio=", 0) == 0) {
        b.split = BudgetSplit::ratio;
        auto body = s.substr(6);
        auto colon = body.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("ratio split must look like ratio=E:D");
        b.enc_ratio = std::stoi(body.substr(0, colon));
        b.dec_ratio = std::stoi(body.substr(colon + 1));
    } else if (s.rfind("explicit=", 0) == 0) {
        b.split = BudgetSplit::explicit_counts;
        auto body = s.substr(9);
        auto comma = body.find(',');
        if (comma == std::string::npos)
            throw std::invalid_argument("explicit split must look like explicit=E,D");
        b.enc_count = std::stoi(body.substr(0, comma));
        b.dec_count = std::stoi(body.substr(comma + 1));
    } else {
        throw std::invalid_argument("unknown budget split: " + s);
    }
    return b;
}

PruningMask prune_fixed_per_layer(const MetricTable& table, const MoeLayout& layout,
                                  const Budget& budget) {
    check_table(table, layout);
    auto [enc_q, dec_q] = budget.per_layer_quotas(layout);
    PruningMask mask;
    mask.metric_kind = metric_name(table.kind);
    mask.min_per_layer = budget.min_per_layer;
    for (const auto& ref : layout.layers) {
        int quota = ref.side == Side::encoder ? enc_q : dec_q;
        mask.retained[ref.global_id] = top_quota(table.layers.at(ref.global_id), quota);
    }
    return mask;
}

namespace {

// n_k(theta) before the floor: smallest n with cumulative mass >= theta.
int mass_count(const Eigen::VectorXd& scores, const std::vector<int>& order, double theta) {
    double cum = 0.0;
    int n = 0;
    while (cum + kThetaEps < theta && n < static_cast<int>(order.size())) {
        cum += scores(order[n]);
        ++n;
    }
    return n;
}

PruningMask threshold_prune(const MetricTable& table, const MoeLayout& layout,
                            const std::vector<MoeLayerRef>& layers, int count,
                            int min_per_layer) {
    const int N = layout.num_experts;
    const int floor = std::min(min_per_layer, N);
    const int num_layers = static_cast<int>(layers.size());
    if (count < num_layers * floor || count > num_layers * N)
        throw std::invalid_argument("threshold pruning: requested count " +
                                    std::to_string(count) + " is infeasible");

    std::map<int, std::vector<int>> orders;
    for (const auto& ref : layers)
        orders[ref.global_id] = metric_order(table.layers.at(ref.global_id));

    auto counts_at = [&](double theta) {
        std::map<int, int> n;
        for (const auto& ref : layers) {
            int raw = mass_count(table.layers.at(ref.global_id), orders[ref.global_id], theta);
            n[ref.global_id] = std::max(raw, floor);
        }
        return n;
    };

    // Largest grid theta whose total does not exceed the budget. n_k(theta)
    // is nondecreasing in theta, so the first overshoot ends the scan.
    std::map<int, int> best = counts_at(0.0);
    for (int step = 1; step <= 1000; ++step) {
        auto n = counts_at(step / 1000.0);
        int total = 0;
        for (const auto& [id, c] : n) total += c;
        if (total > count) break;
        best = std::move(n);
    }

    int total = 0;
    for (const auto& [id, c] : best) total += c;

    // Residual repair: hand the leftover budget to the layers whose next
    // excluded expert scores highest (ties: lower layer id, lower expert id).
    while (total < count) {
        int best_layer = -1, best_expert = -1;
        double best_score = -1.0;
        for (const auto& ref : layers) {
            int n = best[ref.global_id];
            if (n >= N) continue;
            int candidate = orders[ref.global_id][n];
            double score = table.layers.at(ref.global_id)(candidate);
            if (score > best_score ||
                (score == best_score &&
                 (ref.global_id < best_layer ||
                  (ref.global_id == best_layer && candidate < best_expert)))) {
                best_score = score;
                best_layer = ref.global_id;
                best_expert = candidate;
            }
        }
        best[best_layer] += 1;
        ++total;
    }

    PruningMask mask;
    mask.metric_kind = metric_name(table.kind);
    mask.min_per_layer = min_per_layer;
    for (const auto& ref : layers) {
        std::vector<int> keep(orders[ref.global_id].begin(),
                              orders[ref.global_id].begin() + best[ref.global_id]);
        std::sort(keep.begin(), keep.end());
        mask.retained[ref.global_id] = std::move(keep);
    }
    return mask;
}

}  // namespace

PruningMask prune_global_threshold(const MetricTable& table, const MoeLayout& layout,
                                   int count, int min_per_layer) {
    check_table(table, layout);
    return threshold_prune(table, layout, layout.layers, count, min_per_layer);
}

PruningMask prune_encdec_thresholds(const MetricTable& table, const MoeLayout& layout,
                                    int enc_count, int dec_count, int min_per_layer) {
    check_table(table, layout);
    PruningMask enc = threshold_prune(table, layout, layout.side_layers(Side::encoder),
                                      enc_count, min_per_layer);
    PruningMask dec = threshold_prune(table, layout, layout.side_layers(Side::decoder),
                                      dec_count, min_per_layer);
    PruningMask mask;
    mask.metric_kind = metric_name(table.kind);
    mask.min_per_layer = min_per_layer;
    mask.retained = enc.retained;
    for (auto& [id, ids] : dec.retained) mask.retained[id] = std::move(ids);
    return mask;
}

PruningMask random_mask(const MoeLayout& layout, const Budget& budget, std::uint64_t seed) {
    auto [enc_q, dec_q] = budget.per_layer_quotas(layout);
    std::mt19937_64 rng(seed);
    PruningMask mask;
    mask.metric_kind = "random";
    mask.min_per_layer = budget.min_per_layer;
    for (const auto& ref : layout.layers) {
        int quota = ref.side == Side::encoder ? enc_q : dec_q;
        std::vector<int> all(layout.num_experts);
        std::iota(all.begin(), all.end(), 0);
        std::shuffle(all.begin(), all.end(), rng);
        std::vector<int> keep(all.begin(), all.begin() + quota);
        std::sort(keep.begin(), keep.end());
        mask.retained[ref.global_id] = std::move(keep);
    }
    return mask;
}

}  // namespace moeprune
