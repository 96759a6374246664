#include "clear/trees.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "clear/io.hpp"

namespace clear::trees {

double gini(std::span<const std::size_t> counts, std::size_t total) {
    if (total == 0) return 0.0;
    double sum_sq = 0.0;
    const double n = static_cast<double>(total);
    for (auto c : counts) {
        const double p = static_cast<double>(c) / n;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

const TreeNode& DecisionTree::leaf_for(std::span<const double> row) const {
    if (row.size() != n_features_) throw std::invalid_argument("tree: row width mismatch");
    const TreeNode* node = &nodes_.front();
    while (!node->is_leaf()) {
        node = &nodes_[static_cast<std::size_t>(row[static_cast<std::size_t>(node->feature)] < node->threshold
                                                    ? node->left
                                                    : node->right)];
    }
    return *node;
}

int DecisionTree::predict(std::span<const double> row) const {
    const auto& counts = leaf_for(row).class_counts;
    // max_element returns the first maximum, i.e. the lowest class on ties.
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::vector<int> DecisionTree::predict(const Matrix& x) const {
    std::vector<int> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict(x.row(i));
    return out;
}

int DecisionTree::depth() const {
    std::vector<int> d(nodes_.size(), 0);
    int best = 0;
    // Children are always appended after their parent.
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& n = nodes_[i];
        best = std::max(best, d[i]);
        if (!n.is_leaf()) {
            d[static_cast<std::size_t>(n.left)] = d[i] + 1;
            d[static_cast<std::size_t>(n.right)] = d[i] + 1;
        }
    }
    return best;
}

namespace {

struct Builder {
    const Matrix& x;
    std::span<const int> y;
    std::size_t n_classes;
    const TreeParams& params;
    Rng* rng;
    std::vector<TreeNode> nodes;
    std::vector<std::size_t> feature_pool;
    std::vector<std::pair<double, int>> column;

    std::vector<std::size_t> counts_of(std::span<const std::size_t> rows) const {
        std::vector<std::size_t> counts(n_classes, 0);
        for (auto r : rows) ++counts[static_cast<std::size_t>(y[r])];
        return counts;
    }

    std::span<const std::size_t> candidate_features() {
        const std::size_t d = x.cols();
        const std::size_t m = params.features_per_split == 0 ? d : std::min(params.features_per_split, d);
        if (m < d) {
            // Partial Fisher-Yates: the first m slots become a uniform subset.
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t j = i + rng->index(d - i);
                std::swap(feature_pool[i], feature_pool[j]);
            }
        }
        return {feature_pool.data(), m};
    }

    int build(std::vector<std::size_t> rows, int depth) {
        const auto node_index = static_cast<int>(nodes.size());
        nodes.emplace_back();
        auto counts = counts_of(rows);
        const std::size_t n = rows.size();
        nodes.back().n_samples = n;

        const double parent_gini = gini(counts, n);
        const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
        if (pure || depth >= params.max_depth || n < 2 * params.min_leaf) {
            nodes[static_cast<std::size_t>(node_index)].class_counts = std::move(counts);
            return node_index;
        }

        int best_feature = -1;
        double best_threshold = 0.0;
        double best_gain = -1.0;
        std::vector<std::size_t> left_counts(n_classes);
        for (auto f : candidate_features()) {
            column.clear();
            for (auto r : rows) column.emplace_back(x(r, f), y[r]);
            std::sort(column.begin(), column.end());
            std::fill(left_counts.begin(), left_counts.end(), 0);
            for (std::size_t i = 0; i + 1 < n; ++i) {
                ++left_counts[static_cast<std::size_t>(column[i].second)];
                const std::size_t nl = i + 1;
                const std::size_t nr = n - nl;
                if (nl < params.min_leaf) continue;
                if (nr < params.min_leaf) break;
                const double a = column[i].first;
                const double b = column[i + 1].first;
                if (!(a < b)) continue;
                double sum_l = 0.0;
                double sum_r = 0.0;
                for (std::size_t k = 0; k < n_classes; ++k) {
                    const double l = static_cast<double>(left_counts[k]);
                    const double r = static_cast<double>(counts[k] - left_counts[k]);
                    sum_l += l * l;
                    sum_r += r * r;
                }
                const double dl = static_cast<double>(nl);
                const double dr = static_cast<double>(nr);
                const double child = (dl * (1.0 - sum_l / (dl * dl)) + dr * (1.0 - sum_r / (dr * dr))) /
                                     static_cast<double>(n);
                const double gain = parent_gini - child;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = static_cast<int>(f);
                    double mid = a + (b - a) / 2.0;
                    if (!(mid > a)) mid = b;
                    best_threshold = mid;
                }
            }
        }
        if (best_feature < 0) {
            nodes[static_cast<std::size_t>(node_index)].class_counts = std::move(counts);
            return node_index;
        }

        std::vector<std::size_t> left_rows;
        std::vector<std::size_t> right_rows;
        for (auto r : rows) {
            (x(r, static_cast<std::size_t>(best_feature)) < best_threshold ? left_rows : right_rows).push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();

        {
            auto& node = nodes[static_cast<std::size_t>(node_index)];
            node.feature = best_feature;
            node.threshold = best_threshold;
            node.impurity_decrease = std::max(0.0, best_gain);
        }
        const int left = build(std::move(left_rows), depth + 1);
        const int right = build(std::move(right_rows), depth + 1);
        nodes[static_cast<std::size_t>(node_index)].left = left;
        nodes[static_cast<std::size_t>(node_index)].right = right;
        return node_index;
    }
};

}  // namespace

DecisionTree fit_tree(const Matrix& x, std::span<const int> y, std::size_t n_classes,
                      const TreeParams& params, Rng* rng, std::span<const std::size_t> sample) {
    if (y.size() != x.rows()) throw std::invalid_argument("fit_tree: label count does not match rows");
    if (y.empty()) throw std::invalid_argument("fit_tree: no labels");
    if (n_classes == 0) throw std::invalid_argument("fit_tree: n_classes must be positive");
    if (params.min_leaf == 0) throw std::invalid_argument("fit_tree: min_leaf must be >= 1");
    if (!x.all_finite()) throw std::invalid_argument("fit_tree: features contain NaN or infinity");
    for (int label : y) {
        if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
            throw std::invalid_argument("fit_tree: label " + std::to_string(label) + " outside 0.." +
                                        std::to_string(n_classes - 1));
        }
    }
    std::vector<std::size_t> rows;
    if (sample.empty()) {
        rows.resize(x.rows());
        std::iota(rows.begin(), rows.end(), std::size_t{0});
    } else {
        rows.assign(sample.begin(), sample.end());
    }
    if (rows.size() < 2 * params.min_leaf) {
        throw std::invalid_argument("fit_tree: need at least 2*min_leaf rows");
    }
    if (params.features_per_split != 0 && params.features_per_split < x.cols() && rng == nullptr) {
        throw std::invalid_argument("fit_tree: feature subsampling requires an Rng");
    }

    Builder builder{x, y, n_classes, params, rng, {}, {}, {}};
    builder.feature_pool.resize(x.cols());
    std::iota(builder.feature_pool.begin(), builder.feature_pool.end(), std::size_t{0});
    builder.build(std::move(rows), 0);
    return DecisionTree(std::move(builder.nodes), x.cols(), n_classes);
}

ForestModel fit_forest(const Matrix& x, std::span<const int> y, std::size_t n_classes,
                       const ForestParams& params) {
    if (params.n_trees == 0) throw std::invalid_argument("fit_forest: n_trees must be >= 1");
    ForestModel model;
    model.seed = params.seed;
    model.n_classes = n_classes;
    model.features_per_split = params.features_per_split == 0
                                   ? static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(x.cols()))))
                                   : params.features_per_split;
    TreeParams tp;
    tp.max_depth = params.max_depth;
    tp.min_leaf = params.min_leaf;
    tp.features_per_split = model.features_per_split;

    const std::size_t n = x.rows();
    std::vector<std::size_t> sample(n);
    model.trees.reserve(params.n_trees);
    for (std::size_t t = 0; t < params.n_trees; ++t) {
        Rng rng(derive_seed(params.seed, t));
        if (params.bootstrap) {
            for (auto& s : sample) s = rng.index(n);
        } else {
            std::iota(sample.begin(), sample.end(), std::size_t{0});
        }
        model.trees.push_back(fit_tree(x, y, n_classes, tp, &rng, sample));
    }
    return model;
}

int predict_forest(const ForestModel& model, std::span<const double> row) {
    std::vector<std::size_t> votes(model.n_classes, 0);
    for (const auto& tree : model.trees) ++votes[static_cast<std::size_t>(tree.predict(row))];
    return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

std::vector<int> predict_forest(const ForestModel& model, const Matrix& x) {
    std::vector<int> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict_forest(model, x.row(i));
    return out;
}

std::vector<double> feature_importance(const DecisionTree& tree) {
    std::vector<double> imp(tree.n_features(), 0.0);
    const double total = static_cast<double>(tree.root().n_samples);
    for (const auto& node : tree.nodes()) {
        if (node.is_leaf()) continue;
        imp[static_cast<std::size_t>(node.feature)] +=
            static_cast<double>(node.n_samples) / total * node.impurity_decrease;
    }
    const double sum = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (sum > 0.0) {
        for (auto& v : imp) v /= sum;
    }
    return imp;
}

std::vector<double> feature_importance(const ForestModel& forest) {
    if (forest.trees.empty()) return {};
    std::vector<double> imp(forest.trees.front().n_features(), 0.0);
    for (const auto& tree : forest.trees) {
        const auto t = feature_importance(tree);
        for (std::size_t i = 0; i < imp.size(); ++i) imp[i] += t[i];
    }
    const double sum = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (sum > 0.0) {
        for (auto& v : imp) v /= sum;
    }
    return imp;
}

std::vector<RankedFeature> rank_features(std::span<const double> importance,
                                         std::span<const std::string> parents) {
    if (importance.size() != parents.size()) {
        throw std::invalid_argument("rank_features: importance and name counts differ");
    }
    std::map<std::string, double> by_name;
    for (std::size_t i = 0; i < importance.size(); ++i) by_name[parents[i]] += importance[i];
    std::vector<RankedFeature> ranked;
    for (const auto& [name, imp] : by_name) ranked.push_back({name, imp, 0});
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.importance > b.importance; });
    for (std::size_t i = 0; i < ranked.size(); ++i) ranked[i].rank = i + 1;
    return ranked;
}

std::vector<RankedFeature> select_top(std::span<const RankedFeature> ranked, std::size_t k,
                                      std::span<const std::string> excluded) {
    std::vector<RankedFeature> out;
    for (const auto& f : ranked) {
        if (std::find(excluded.begin(), excluded.end(), f.name) != excluded.end()) continue;
        if (out.size() == k) break;
        out.push_back(f);
        out.back().rank = out.size();
    }
    return out;
}

void write_importance_csv(const std::filesystem::path& path, std::span<const RankedFeature> ranked) {
    std::string out = "feature,importance,rank\n";
    for (const auto& f : ranked) {
        out += io::csv_line({f.name, io::format_double(f.importance), std::to_string(f.rank)});
    }
    io::write_file_atomic(path, out);
}

std::vector<std::string> read_excludelist(const std::filesystem::path& path) {
    const auto text = io::read_file(path);
    std::vector<std::string> names;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(start, end - start);
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
        std::size_t lead = 0;
        while (lead < line.size() && (line[lead] == ' ' || line[lead] == '\t')) ++lead;
        line.erase(0, lead);
        if (!line.empty() && line.front() != '#') names.push_back(line);
        start = end + 1;
    }
    return names;
}

}  // namespace clear::trees
