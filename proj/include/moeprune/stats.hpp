#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "moeprune/config.hpp"
#include "moeprune/model.hpp"

namespace moeprune {

enum class Granularity { global, lang_pair, lang_specific };

Granularity granularity_from_name(const std::string& s);
const char* granularity_name(Granularity g);

struct StatsKey {
    Granularity granularity = Granularity::lang_pair;
    Side side = Side::encoder;
    std::string src_lang;  // set per granularity rules
    std::string tgt_lang;

    void validate() const;
    std::string label() const;
    bool operator<(const StatsKey& o) const;
    bool operator==(const StatsKey& o) const;
};

struct ExpertCounters {
    std::uint64_t top1_count = 0;
    std::uint64_t top2_count = 0;  // ranked first or second
    double gate_sum = 0.0;         // over all tokens
    double conf_sum = 0.0;         // gate value when ranked first
};

struct LayerStats {
    std::vector<ExpertCounters> experts;
    std::uint64_t token_count = 0;
};

// Mergeable per-(layer, expert) routing counters for one stats key.
struct ExpertStats {
    int num_experts = 0;
    std::map<int, LayerStats> layers;  // keyed by global MoE layer id

    void record(const GateDecision& d);
    bool empty() const { return layers.empty(); }
};

ExpertStats merge(const ExpertStats& a, const ExpertStats& b);

struct FinalizedLayer {
    Eigen::VectorXd top1, top2, mean, conf;
};

struct FinalizedStats {
    int num_experts = 0;
    std::map<int, FinalizedLayer> layers;
};

// Turns counters into fractions; throws naming the layer when a layer saw
// no tokens. conf(e) is 0 for experts never ranked first.
FinalizedStats finalize(const ExpertStats& stats, const std::string& key_label = "");

using StatsMap = std::map<StatsKey, ExpertStats>;

// Raw statistics are always collected at (lang_pair, side) granularity;
// coarser views are derived by merging counters.
class StatsRecorder {
  public:
    explicit StatsRecorder(int num_experts) : num_experts_(num_experts) {}

    void record(const GateDecision& d, const std::string& src_lang,
                const std::string& tgt_lang, Side side);
    void merge_from(const StatsRecorder& other);

    const StatsMap& per_direction() const { return stats_; }

  private:
    int num_experts_;
    StatsMap stats_;
};

// Derives the requested granularity from per-direction raw counters.
// `directions` lists the (src, tgt) pairs that must be present.
StatsMap aggregate_by_granularity(
    const StatsMap& per_direction, Granularity granularity,
    const std::vector<std::pair<std::string, std::string>>& directions);

void write_stats(std::ostream& os, const StatsMap& stats);
void write_stats_file(const std::string& path, const StatsMap& stats);
StatsMap read_stats(std::istream& is);
StatsMap read_stats_file(const std::string& path);

}  // namespace moeprune
