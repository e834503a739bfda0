#include "moeprune/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "moeprune/metrics.hpp"

namespace moeprune {

ExpertSet ExpertSet::from_mask(const PruningMask& mask, const MoeLayout& layout, Side side) {
    ExpertSet set;
    set.side = side;
    for (const auto& ref : layout.layers) {
        if (ref.side != side) continue;
        for (int e : mask.layer_retained(ref.global_id))
            set.experts.insert({ref.global_id, e});
    }
    return set;
}

double jaccard(const ExpertSet& a, const ExpertSet& b) {
    if (a.side != b.side)
        throw std::invalid_argument("jaccard: expert sets are from different sides");
    if (a.experts.empty() && b.experts.empty()) return 1.0;
    size_t inter = 0;
    for (const auto& e : a.experts) inter += b.experts.count(e);
    size_t uni = a.experts.size() + b.experts.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<ImportanceVector> build_importance_vectors(
    const std::map<std::string, FinalizedStats>& per_language, Side side) {
    if (per_language.empty())
        throw std::invalid_argument("build_importance_vectors: no language statistics");
    std::vector<ImportanceVector> out;
    for (const auto& [language, stats] : per_language) {
        MetricTable table =
            normalize_per_layer(compute_metric(stats, MetricKind::importance));
        Eigen::Index total = 0;
        for (const auto& [id, scores] : table.layers) total += scores.size();
        ImportanceVector v;
        v.language = language;
        v.side = side;
        v.values.resize(total);
        Eigen::Index at = 0;
        for (const auto& [id, scores] : table.layers) {  // map: ascending layer id
            v.values.segment(at, scores.size()) = scores;
            at += scores.size();
        }
        out.push_back(std::move(v));
    }
    return out;
}

namespace {

struct Cluster {
    int node = 0;
    std::vector<int> members;   // original point indices
    std::string min_label;
};

}  // namespace

Dendrogram hcluster_points(const std::vector<std::string>& labels,
                           const std::vector<Eigen::VectorXd>& points) {
    if (labels.size() != points.size())
        throw std::invalid_argument("hcluster: label/point count mismatch");
    const int n = static_cast<int>(points.size());
    if (n < 2) throw std::invalid_argument("hcluster: need at least 2 vectors");
    for (const auto& p : points)
        if (p.size() != points[0].size())
            throw std::invalid_argument("hcluster: vector length mismatch");

    Eigen::MatrixXd dist(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) dist(i, j) = (points[i] - points[j]).norm();

    Dendrogram tree;
    std::vector<Cluster> active;
    for (int i = 0; i < n; ++i) {
        tree.nodes.push_back({true, labels[i], 0.0, -1, -1});
        active.push_back({i, {i}, labels[i]});
    }

    auto linkage = [&](const Cluster& a, const Cluster& b) {
        double sum = 0.0;
        for (int i : a.members)
            for (int j : b.members) sum += dist(i, j);
        return sum / (static_cast<double>(a.members.size()) * b.members.size());
    };

    while (active.size() > 1) {
        int bi = -1, bj = -1;
        double best = 0.0;
        std::pair<std::string, std::string> best_key;
        for (size_t i = 0; i < active.size(); ++i) {
            for (size_t j = i + 1; j < active.size(); ++j) {
                double d = linkage(active[i], active[j]);
                std::pair<std::string, std::string> key =
                    std::minmax(active[i].min_label, active[j].min_label);
                if (bi < 0 || d < best || (d == best && key < best_key)) {
                    best = d;
                    best_key = key;
                    bi = static_cast<int>(i);
                    bj = static_cast<int>(j);
                }
            }
        }
        // smaller min label becomes the left child
        if (active[bj].min_label < active[bi].min_label) std::swap(bi, bj);
        DendroNode merged{false, "", best, active[bi].node, active[bj].node};
        tree.nodes.push_back(merged);
        Cluster next;
        next.node = static_cast<int>(tree.nodes.size()) - 1;
        next.members = active[bi].members;
        next.members.insert(next.members.end(), active[bj].members.begin(),
                            active[bj].members.end());
        next.min_label = std::min(active[bi].min_label, active[bj].min_label);
        if (bi > bj) std::swap(bi, bj);
        active.erase(active.begin() + bj);
        active.erase(active.begin() + bi);
        active.push_back(std::move(next));
    }
    tree.root = active[0].node;
    return tree;
}

Dendrogram hcluster(const std::vector<ImportanceVector>& vectors) {
    std::vector<std::string> labels;
    std::vector<Eigen::VectorXd> points;
    for (const auto& v : vectors) {
        labels.push_back(v.language);
        points.push_back(v.values);
    }
    return hcluster_points(labels, points);
}

namespace {

std::string fmt_len(double v) {
    std::ostringstream ss;
    ss << v;
    return ss.str();
}

void newick_rec(const Dendrogram& tree, int id, double parent_depth, std::string& out) {
    const DendroNode& node = tree.nodes[id];
    double depth = node.height / 2.0;
    if (node.leaf) {
        out += node.label;
    } else {
        out += '(';
        newick_rec(tree, node.left, depth, out);
        out += ',';
        newick_rec(tree, node.right, depth, out);
        out += ')';
    }
    if (parent_depth >= 0.0) {
        out += ':';
        out += fmt_len(parent_depth - depth);
    }
}

}  // namespace

std::string to_newick(const Dendrogram& tree) {
    if (tree.root < 0) throw std::invalid_argument("to_newick: empty tree");
    std::string out;
    newick_rec(tree, tree.root, -1.0, out);
    out += ';';
    return out;
}

namespace {

void leaf_order(const Dendrogram& tree, int id, std::vector<int>& order) {
    const DendroNode& node = tree.nodes[id];
    if (node.leaf) {
        order.push_back(id);
        return;
    }
    leaf_order(tree, node.left, order);
    leaf_order(tree, node.right, order);
}

}  // namespace

std::string dendrogram_svg(const Dendrogram& tree,
                           const std::map<std::string, std::string>& leaf_colors) {
    if (tree.root < 0) throw std::invalid_argument("dendrogram_svg: empty tree");
    std::vector<int> leaves;
    leaf_order(tree, tree.root, leaves);
    double max_height = tree.nodes[tree.root].height;
    if (max_height <= 0.0) max_height = 1.0;

    const double row = 22.0, left = 20.0, plot_w = 420.0, label_x = left + plot_w + 8.0;
    const double height_px = row * (leaves.size() + 1);
    auto x_of = [&](double h) { return left + plot_w * (1.0 - h / max_height); };

    std::map<int, double> ypos;
    for (size_t i = 0; i < leaves.size(); ++i) ypos[leaves[i]] = row * (i + 1);

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
        << static_cast<int>(label_x + 120) << "\" height=\"" << static_cast<int>(height_px)
        << "\">\n";

    // post-order so parents see resolved child positions
    std::vector<int> stack = {tree.root}, post;
    while (!stack.empty()) {
        int id = stack.back();
        stack.pop_back();
        post.push_back(id);
        const DendroNode& n = tree.nodes[id];
        if (!n.leaf) {
            stack.push_back(n.left);
            stack.push_back(n.right);
        }
    }
    std::reverse(post.begin(), post.end());
    for (int id : post) {
        const DendroNode& n = tree.nodes[id];
        if (n.leaf) continue;
        double yl = ypos.at(n.left), yr = ypos.at(n.right);
        double x = x_of(n.height);
        double xl = x_of(tree.nodes[n.left].height), xr = x_of(tree.nodes[n.right].height);
        svg << "  <line x1=\"" << x << "\" y1=\"" << yl << "\" x2=\"" << xl << "\" y2=\""
            << yl << "\" stroke=\"black\"/>\n";
        svg << "  <line x1=\"" << x << "\" y1=\"" << yr << "\" x2=\"" << xr << "\" y2=\""
            << yr << "\" stroke=\"black\"/>\n";
        svg << "  <line x1=\"" << x << "\" y1=\"" << yl << "\" x2=\"" << x << "\" y2=\""
            << yr << "\" stroke=\"black\"/>\n";
        ypos[id] = (yl + yr) / 2.0;
    }
    for (int id : leaves) {
        const DendroNode& n = tree.nodes[id];
        std::string color = "black";
        auto it = leaf_colors.find(n.label);
        if (it != leaf_colors.end()) color = it->second;
        svg << "  <text x=\"" << label_x << "\" y=\"" << ypos.at(id) + 4
            << "\" fill=\"" << color << "\" font-family=\"monospace\">" << n.label
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

namespace {

struct ParsedNode {
    std::string label;
    std::vector<ParsedNode> children;
};

ParsedNode parse_newick_rec(const std::string& s, size_t& pos) {
    ParsedNode node;
    if (pos < s.size() && s[pos] == '(') {
        ++pos;  // '('
        while (true) {
            node.children.push_back(parse_newick_rec(s, pos));
            if (pos >= s.size()) throw std::invalid_argument("newick: unterminated group");
            if (s[pos] == ',') {
                ++pos;
                continue;
            }
            if (s[pos] == ')') {
                ++pos;
                break;
            }
            throw std::invalid_argument("newick: unexpected character");
        }
    }
    while (pos < s.size() && s[pos] != ':' && s[pos] != ',' && s[pos] != ')' &&
           s[pos] != ';')
        node.label.push_back(s[pos++]);
    if (pos < s.size() && s[pos] == ':') {
        ++pos;
        while (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) ||
                                  s[pos] == '.' || s[pos] == '-' || s[pos] == 'e' ||
                                  s[pos] == 'E' || s[pos] == '+'))
            ++pos;  // branch length ignored for topology
    }
    return node;
}

std::string canon(const ParsedNode& node) {
    if (node.children.empty()) return node.label;
    std::vector<std::string> parts;
    for (const auto& c : node.children) parts.push_back(canon(c));
    std::sort(parts.begin(), parts.end());
    std::string out = "(";
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += ',';
        out += parts[i];
    }
    out += ')';
    return out;
}

std::string canon_tree(const Dendrogram& tree, int id) {
    const DendroNode& n = tree.nodes[id];
    if (n.leaf) return n.label;
    std::vector<std::string> parts = {canon_tree(tree, n.left), canon_tree(tree, n.right)};
    std::sort(parts.begin(), parts.end());
    return "(" + parts[0] + "," + parts[1] + ")";
}

}  // namespace

std::string topology_of(const Dendrogram& tree) {
    if (tree.root < 0) throw std::invalid_argument("topology_of: empty tree");
    return canon_tree(tree, tree.root);
}

std::string newick_topology(const std::string& newick) {
    size_t pos = 0;
    ParsedNode root = parse_newick_rec(newick, pos);
    if (pos >= newick.size() || newick[pos] != ';')
        throw std::invalid_argument("newick: missing terminator");
    return canon(root);
}

LengthRatioReport length_ratio_report(
    const std::map<std::pair<std::string, std::string>,
                   std::pair<std::vector<std::string>, std::vector<std::string>>>&
        hyp_ref_per_direction) {
    if (hyp_ref_per_direction.empty())
        throw std::invalid_argument("length_ratio_report: no directions");
    auto count_tokens = [](const std::vector<std::string>& lines) {
        long n = 0;
        for (const auto& line : lines) {
            std::istringstream ss(line);
            std::string t;
            while (ss >> t) ++n;
        }
        return n;
    };
    LengthRatioReport report;
    for (const auto& [dir, pair] : hyp_ref_per_direction) {
        long hyp = count_tokens(pair.first);
        long ref = count_tokens(pair.second);
        if (ref == 0)
            throw std::invalid_argument("length_ratio_report: empty reference for " +
                                        dir.first + "-" + dir.second);
        report.per_direction[dir] = static_cast<double>(hyp) / static_cast<double>(ref);
    }
    double sum = 0.0;
    for (const auto& [dir, r] : report.per_direction) sum += r;
    report.mean = sum / report.per_direction.size();
    double sq = 0.0;
    for (const auto& [dir, r] : report.per_direction)
        sq += (r - report.mean) * (r - report.mean);
    report.stddev = std::sqrt(sq / report.per_direction.size());
    return report;
}

std::string similarity_matrix_tsv(const std::vector<std::string>& labels,
                                  const std::vector<ExpertSet>& sets) {
    if (labels.size() != sets.size())
        throw std::invalid_argument("similarity_matrix_tsv: label/set count mismatch");
    std::ostringstream os;
    for (const auto& l : labels) os << '\t' << l;
    os << '\n';
    char buf[32];
    for (size_t i = 0; i < sets.size(); ++i) {
        os << labels[i];
        for (size_t j = 0; j < sets.size(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.4f", jaccard(sets[i], sets[j]));
            os << '\t' << buf;
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace moeprune
