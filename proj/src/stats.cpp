#include "moeprune/stats.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace moeprune {

Granularity granularity_from_name(const std::string& s) {
    if (s == "global") return Granularity::global;
    if (s == "lang_pair" || s == "lang-pair") return Granularity::lang_pair;
    if (s == "lang_specific" || s == "lang") return Granularity::lang_specific;
    throw std::invalid_argument("unknown granularity: " + s);
}

const char* granularity_name(Granularity g) {
    switch (g) {
        case Granularity::global: return "global";
        case Granularity::lang_pair: return "lang_pair";
        case Granularity::lang_specific: return "lang_specific";
    }
    return "?";
}

void StatsKey::validate() const {
    switch (granularity) {
        case Granularity::global:
            if (!src_lang.empty() || !tgt_lang.empty())
                throw std::invalid_argument("global stats key must not carry languages");
            break;
        case Granularity::lang_pair:
            if (src_lang.empty() || tgt_lang.empty())
                throw std::invalid_argument("lang_pair stats key needs both languages");
            break;
        case Granularity::lang_specific:
            if (side == Side::encoder && (src_lang.empty() || !tgt_lang.empty()))
                throw std::invalid_argument(
                    "encoder lang_specific key carries the source language only");
            if (side == Side::decoder && (tgt_lang.empty() || !src_lang.empty()))
                throw std::invalid_argument(
                    "decoder lang_specific key carries the target language only");
            break;
    }
}

std::string StatsKey::label() const {
    std::string s = std::string(granularity_name(granularity)) + "/" + side_name(side);
    if (!src_lang.empty()) s += "/" + src_lang;
    if (!tgt_lang.empty()) s += (src_lang.empty() ? "/" : "-") + tgt_lang;
    return s;
}

bool StatsKey::operator<(const StatsKey& o) const {
    return std::tie(granularity, side, src_lang, tgt_lang) <
           std::tie(o.granularity, o.side, o.src_lang, o.tgt_lang);
}

bool StatsKey::operator==(const StatsKey& o) const {
    return std::tie(granularity, side, src_lang, tgt_lang) ==
           std::tie(o.granularity, o.side, o.src_lang, o.tgt_lang);
}

void ExpertStats::record(const GateDecision& d) {
    if (num_experts == 0) num_experts = static_cast<int>(d.gate_probs.size());
    if (static_cast<int>(d.gate_probs.size()) != num_experts)
        throw std::invalid_argument("record: gate vector size mismatch");
    LayerStats& layer = layers[d.layer_id];
    if (layer.experts.empty()) layer.experts.resize(num_experts);
    layer.token_count += 1;
    layer.experts[d.top1].top1_count += 1;
    layer.experts[d.top1].top2_count += 1;
    layer.experts[d.top2].top2_count += 1;
    layer.experts[d.top1].conf_sum += d.gate_top1;
    for (int e = 0; e < num_experts; ++e) layer.experts[e].gate_sum += d.gate_probs(e);
}

ExpertStats merge(const ExpertStats& a, const ExpertStats& b) {
    if (a.num_experts != 0 && b.num_experts != 0 && a.num_experts != b.num_experts)
        throw std::invalid_argument("merge: expert dimension mismatch");
    ExpertStats out = a;
    if (out.num_experts == 0) out.num_experts = b.num_experts;
    for (const auto& [layer_id, layer] : b.layers) {
        LayerStats& dst = out.layers[layer_id];
        if (dst.experts.empty()) dst.experts.resize(layer.experts.size());
        if (dst.experts.size() != layer.experts.size())
            throw std::invalid_argument("merge: layer expert count mismatch");
        dst.token_count += layer.token_count;
        for (size_t e = 0; e < layer.experts.size(); ++e) {
            dst.experts[e].top1_count += layer.experts[e].top1_count;
            dst.experts[e].top2_count += layer.experts[e].top2_count;
            dst.experts[e].gate_sum += layer.experts[e].gate_sum;
            dst.experts[e].conf_sum += layer.experts[e].conf_sum;
        }
    }
    return out;
}

FinalizedStats finalize(const ExpertStats& stats, const std::string& key_label) {
    if (stats.empty())
        throw std::runtime_error("finalize: no statistics recorded" +
                                 (key_label.empty() ? std::string() : " for " + key_label));
    FinalizedStats out;
    out.num_experts = stats.num_experts;
    for (const auto& [layer_id, layer] : stats.layers) {
        if (layer.token_count == 0)
            throw std::runtime_error("finalize: no tokens recorded for layer " +
                                     std::to_string(layer_id) +
                                     (key_label.empty() ? "" : " of " + key_label));
        const int N = static_cast<int>(layer.experts.size());
        FinalizedLayer f;
        f.top1 = Eigen::VectorXd::Zero(N);
        f.top2 = Eigen::VectorXd::Zero(N);
        f.mean = Eigen::VectorXd::Zero(N);
        f.conf = Eigen::VectorXd::Zero(N);
        const double tokens = static_cast<double>(layer.token_count);
        for (int e = 0; e < N; ++e) {
            const ExpertCounters& c = layer.experts[e];
            f.top1(e) = static_cast<double>(c.top1_count) / tokens;
            f.top2(e) = static_cast<double>(c.top2_count) / tokens;
            f.mean(e) = c.gate_sum / tokens;
            f.conf(e) = c.top1_count > 0
                            ? c.conf_sum / static_cast<double>(c.top1_count)
                            : 0.0;
        }
        out.layers[layer_id] = std::move(f);
    }
    return out;
}

void StatsRecorder::record(const GateDecision& d, const std::string& src_lang,
                           const std::string& tgt_lang, Side side) {
    StatsKey key{Granularity::lang_pair, side, src_lang, tgt_lang};
    key.validate();
    ExpertStats& s = stats_[key];
    if (s.num_experts == 0) s.num_experts = num_experts_;
    s.record(d);
}

void StatsRecorder::merge_from(const StatsRecorder& other) {
    for (const auto& [key, stats] : other.stats_) {
        auto it = stats_.find(key);
        if (it == stats_.end())
            stats_[key] = stats;
        else
            it->second = merge(it->second, stats);
    }
}

StatsMap aggregate_by_granularity(
    const StatsMap& per_direction, Granularity granularity,
    const std::vector<std::pair<std::string, std::string>>& directions) {
    std::string missing;
    for (const auto& [src, tgt] : directions) {
        for (Side side : {Side::encoder, Side::decoder}) {
            StatsKey key{Granularity::lang_pair, side, src, tgt};
            if (per_direction.find(key) == per_direction.end())
                missing += (missing.empty() ? "" : ", ") + key.label();
        }
    }
    if (!missing.empty())
        throw std::runtime_error("missing per-direction statistics for: " + missing);

    StatsMap out;
    for (const auto& [src, tgt] : directions) {
        for (Side side : {Side::encoder, Side::decoder}) {
            StatsKey raw{Granularity::lang_pair, side, src, tgt};
            const ExpertStats& stats = per_direction.at(raw);
            StatsKey key;
            switch (granularity) {
                case Granularity::global:
                    key = {Granularity::global, side, "", ""};
                    break;
                case Granularity::lang_pair:
                    key = raw;
                    break;
                case Granularity::lang_specific:
                    key = side == Side::encoder
                              ? StatsKey{Granularity::lang_specific, side, src, ""}
                              : StatsKey{Granularity::lang_specific, side, "", tgt};
                    break;
            }
            auto it = out.find(key);
            if (it == out.end())
                out[key] = stats;
            else
                it->second = merge(it->second, stats);
        }
    }
    return out;
}

namespace {

std::string fmt_sum(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string or_dash(const std::string& s) { return s.empty() ? "-" : s; }
std::string from_dash(const std::string& s) { return s == "-" ? "" : s; }

}  // namespace

void write_stats(std::ostream& os, const StatsMap& stats) {
    for (const auto& [key, s] : stats) {
        for (const auto& [layer_id, layer] : s.layers) {
            for (size_t e = 0; e < layer.experts.size(); ++e) {
                const ExpertCounters& c = layer.experts[e];
                os << granularity_name(key.granularity) << '\t' << side_name(key.side)
                   << '\t' << or_dash(key.src_lang) << '\t' << or_dash(key.tgt_lang)
                   << '\t' << layer_id << '\t' << e << '\t' << c.top1_count << '\t'
                   << c.top2_count << '\t' << fmt_sum(c.gate_sum) << '\t'
                   << fmt_sum(c.conf_sum) << '\t' << layer.token_count << '\n';
            }
        }
    }
}

void write_stats_file(const std::string& path, const StatsMap& stats) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open stats file for writing: " + path);
    write_stats(os, stats);
}

StatsMap read_stats(std::istream& is) {
    StatsMap out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string gran, side, src, tgt;
        int layer_id, expert_id;
        std::uint64_t top1, top2, token_count;
        double gate_sum, conf_sum;
        if (!(ss >> gran >> side >> src >> tgt >> layer_id >> expert_id >> top1 >> top2 >>
              gate_sum >> conf_sum >> token_count))
            throw std::runtime_error("bad stats line " + std::to_string(lineno));
        StatsKey key{granularity_from_name(gran), side_from_name(side), from_dash(src),
                     from_dash(tgt)};
        ExpertStats& s = out[key];
        LayerStats& layer = s.layers[layer_id];
        if (static_cast<int>(layer.experts.size()) <= expert_id)
            layer.experts.resize(expert_id + 1);
        layer.experts[expert_id] = {top1, top2, gate_sum, conf_sum};
        layer.token_count = token_count;
        s.num_experts = std::max(s.num_experts, expert_id + 1);
    }
    return out;
}

StatsMap read_stats_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open stats file: " + path);
    return read_stats(is);
}

}  // namespace moeprune
