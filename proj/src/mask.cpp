#include "moeprune/mask.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace moeprune {

namespace {
constexpr const char* kMagic = "MOEPRUNE-MASK 1";
}

int PruningMask::total_retained() const {
    int n = 0;
    for (const auto& [id, ids] : retained) n += static_cast<int>(ids.size());
    return n;
}

int PruningMask::retained_in(int layer_id) const {
    return static_cast<int>(layer_retained(layer_id).size());
}

bool PruningMask::is_retained(int layer_id, int expert_id) const {
    const auto& ids = layer_retained(layer_id);
    return std::binary_search(ids.begin(), ids.end(), expert_id);
}

const std::vector<int>& PruningMask::layer_retained(int layer_id) const {
    auto it = retained.find(layer_id);
    if (it == retained.end())
        throw std::out_of_range("PruningMask: no layer " + std::to_string(layer_id));
    return it->second;
}

void PruningMask::validate(const MoeLayout& layout) const {
    if (static_cast<int>(retained.size()) != layout.num_layers())
        throw std::invalid_argument("PruningMask: expected " +
                                    std::to_string(layout.num_layers()) +
                                    " layers, got " + std::to_string(retained.size()));
    for (const auto& ref : layout.layers) {
        const auto& ids = layer_retained(ref.global_id);
        std::set<int> uniq(ids.begin(), ids.end());
        if (uniq.size() != ids.size())
            throw std::invalid_argument("PruningMask: duplicate expert id in layer " +
                                        std::to_string(ref.global_id));
        if (!std::is_sorted(ids.begin(), ids.end()))
            throw std::invalid_argument("PruningMask: unsorted expert ids in layer " +
                                        std::to_string(ref.global_id));
        for (int e : ids)
            if (e < 0 || e >= layout.num_experts)
                throw std::invalid_argument("PruningMask: expert id out of range in layer " +
                                            std::to_string(ref.global_id));
        int floor = std::min(min_per_layer, layout.num_experts);
        if (static_cast<int>(ids.size()) < floor)
            throw std::invalid_argument("PruningMask: layer " + std::to_string(ref.global_id) +
                                        " retains fewer than " + std::to_string(floor) +
                                        " experts");
    }
}

PruningMask PruningMask::full(const MoeLayout& layout) {
    PruningMask mask;
    mask.metric_kind = "none";
    mask.granularity_key = "full";
    std::vector<int> all(layout.num_experts);
    for (int e = 0; e < layout.num_experts; ++e) all[e] = e;
    for (const auto& ref : layout.layers) mask.retained[ref.global_id] = all;
    return mask;
}

void PruningMask::save(std::ostream& os) const {
    os << kMagic << "\n";
    os << "metric " << metric_kind << "\n";
    os << "granularity " << granularity_key << "\n";
    os << "min_per_layer " << min_per_layer << "\n";
    for (const auto& [id, ids] : retained) {
        os << "layer " << id << " :";
        for (int e : ids) os << " " << e;
        os << "\n";
    }
}

void PruningMask::save_file(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open mask file for writing: " + path);
    save(os);
}

PruningMask PruningMask::load(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kMagic)
        throw std::runtime_error("bad mask file: missing header");
    PruningMask mask;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "metric") {
            ss >> mask.metric_kind;
        } else if (tag == "granularity") {
            ss >> mask.granularity_key;
        } else if (tag == "min_per_layer") {
            ss >> mask.min_per_layer;
        } else if (tag == "layer") {
            int id;
            std::string colon;
            ss >> id >> colon;
            if (colon != ":") throw std::runtime_error("bad mask file: malformed layer line");
            std::vector<int> ids;
            int e;
            while (ss >> e) ids.push_back(e);
            mask.retained[id] = std::move(ids);
        } else {
            throw std::runtime_error("bad mask file: unknown field '" + tag + "'");
        }
    }
    return mask;
}

PruningMask PruningMask::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open mask file: " + path);
    return load(is);
}

}  // namespace moeprune
