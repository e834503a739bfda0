#pragma once

#include <string>
#include <vector>

#include "moeprune/data.hpp"
#include "moeprune/model.hpp"
#include "moeprune/stats.hpp"

namespace moeprune {

// Length-normalized beam search. The target language token forces the
// output language; decoding stops at eos or 2 * source length + 8.
// Gate decisions of the encoder pass and of a forced pass over the finally
// selected hypothesis are forwarded to `recorder` when given.
std::vector<std::string> translate_beam(const MoEModel& model, const Vocab& vocab,
                                        const CorpusSample& sample,
                                        const PruningMask* mask = nullptr,
                                        StatsRecorder* recorder = nullptr,
                                        int beam_size = -1, int max_len = -1);

}  // namespace moeprune
