#pragma once

#include <string>
#include <vector>

namespace moeprune {

struct ChrfParams {
    int char_ngram_max = 6;
    int word_ngram_max = 2;
    double beta = 2.0;
};

// chrF++: F_beta over character 1..6-grams (whitespace excluded) plus word
// 1..2-grams, uniformly averaged; statistics are summed over all segments
// before scoring. With several references, each segment counts against its
// best-scoring reference.
double chrf_pp(const std::vector<std::string>& hypotheses,
               const std::vector<std::vector<std::string>>& references,
               const ChrfParams& params = {});

// Single-segment convenience wrapper.
double chrf_pp_segment(const std::string& hypothesis,
                       const std::vector<std::string>& references,
                       const ChrfParams& params = {});

}  // namespace moeprune
