#pragma once

#include <functional>
#include <string>
#include <vector>

#include "moeprune/beam.hpp"
#include "moeprune/chrf.hpp"
#include "moeprune/data.hpp"

namespace moeprune {

struct EvalRow {
    std::string src, tgt;
    double chrf_pp = 0.0;
    double length_ratio = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double avg_chrf = 0.0;
    double avg_length_ratio = 0.0;
};

// Resolves the mask for one direction; throws when no mask exists at the
// requested granularity. A null resolver decodes without pruning.
using MaskResolver =
    std::function<const PruningMask*(const std::string& src, const std::string& tgt)>;

EvalReport corpus_eval(const MoEModel& model, const Vocab& vocab,
                       const std::vector<CorpusSample>& corpus,
                       const std::vector<std::pair<std::string, std::string>>& directions,
                       const MaskResolver& resolver = nullptr,
                       StatsRecorder* recorder = nullptr);

// Stable textual form: one row per direction plus an average footer.
std::string eval_report_text(const EvalReport& report);

std::vector<std::pair<std::string, std::string>> corpus_directions(
    const std::vector<CorpusSample>& corpus);

}  // namespace moeprune
