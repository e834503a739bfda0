#pragma once

#include <Eigen/Dense>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "moeprune/mask.hpp"
#include "moeprune/stats.hpp"

namespace moeprune {

struct ExpertSet {
    Side side = Side::encoder;
    std::set<std::pair<int, int>> experts;  // (layer id, expert id)

    static ExpertSet from_mask(const PruningMask& mask, const MoeLayout& layout, Side side);
};

// |a n b| / |a u b|; two empty sets count as identical (1.0).
double jaccard(const ExpertSet& a, const ExpertSet& b);

struct ImportanceVector {
    std::string language;
    Side side = Side::decoder;
    Eigen::VectorXd values;  // per-layer normalized importance, concatenated
};

// One feature vector per language from language-specific statistics:
// importance per expert, normalized per layer, layers in ascending id order.
std::vector<ImportanceVector> build_importance_vectors(
    const std::map<std::string, FinalizedStats>& per_language, Side side);

struct DendroNode {
    bool leaf = false;
    std::string label;       // leaves only
    double height = 0.0;     // merge distance (leaves: 0)
    int left = -1, right = -1;
};

struct Dendrogram {
    std::vector<DendroNode> nodes;
    int root = -1;
};

// Agglomerative clustering, Euclidean distance, average linkage. Ties are
// broken by the lexicographically smallest leaf label of each cluster, so
// the result is independent of input order.
Dendrogram hcluster(const std::vector<ImportanceVector>& vectors);
Dendrogram hcluster_points(const std::vector<std::string>& labels,
                           const std::vector<Eigen::VectorXd>& points);

// Newick with branch lengths under an ultrametric depth of height / 2.
std::string to_newick(const Dendrogram& tree);
std::string dendrogram_svg(const Dendrogram& tree,
                           const std::map<std::string, std::string>& leaf_colors = {});

// Canonical topology strings (children ordered by smallest leaf label,
// branch lengths dropped) for round-trip comparisons.
std::string topology_of(const Dendrogram& tree);
std::string newick_topology(const std::string& newick);

struct LengthRatioReport {
    std::map<std::pair<std::string, std::string>, double> per_direction;
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation across directions
};

// ratio = total hypothesis tokens / total reference tokens per direction.
LengthRatioReport length_ratio_report(
    const std::map<std::pair<std::string, std::string>,
                   std::pair<std::vector<std::string>, std::vector<std::string>>>&
        hyp_ref_per_direction);

// TSV with row/column labels plus pairwise Jaccard values.
std::string similarity_matrix_tsv(const std::vector<std::string>& labels,
                                  const std::vector<ExpertSet>& sets);

}  // namespace moeprune
