#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "moeprune/config.hpp"

namespace moeprune {

// Retained expert ids per MoE layer. Layers are keyed by global MoE layer id
// and every layer of the owning layout must be present.
struct PruningMask {
    std::map<int, std::vector<int>> retained;  // layer id -> sorted expert ids
    std::string metric_kind;
    std::string granularity_key;
    int min_per_layer = 4;

    int total_retained() const;
    int retained_in(int layer_id) const;
    bool is_retained(int layer_id, int expert_id) const;
    const std::vector<int>& layer_retained(int layer_id) const;

    // Checks ids in range, uniqueness, presence of every layout layer.
    void validate(const MoeLayout& layout) const;

    static PruningMask full(const MoeLayout& layout);

    void save(std::ostream& os) const;
    void save_file(const std::string& path) const;
    static PruningMask load(std::istream& is);
    static PruningMask load_file(const std::string& path);
};

}  // namespace moeprune
