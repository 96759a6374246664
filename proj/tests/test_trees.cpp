#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "clear/trees.hpp"
#include "test_support.hpp"

using namespace clear;
using namespace clear::trees;

namespace {

Matrix matrix_of(std::size_t rows, std::size_t cols, std::vector<double> v) {
    Matrix m(rows, cols);
    std::copy(v.begin(), v.end(), m.values().begin());
    return m;
}

// Best single split by exhaustive enumeration of every (feature, midpoint).
double best_gain_bruteforce(const Matrix& x, const std::vector<int>& y, std::size_t n_classes) {
    auto g = [&](const std::vector<std::size_t>& idx) {
        if (idx.empty()) return 0.0;
        std::vector<double> c(n_classes, 0.0);
        for (auto i : idx) c[static_cast<std::size_t>(y[i])] += 1.0;
        double s = 1.0;
        for (double v : c) s -= (v / idx.size()) * (v / idx.size());
        return s;
    };
    std::vector<std::size_t> all(x.rows());
    std::iota(all.begin(), all.end(), 0);
    const double parent = g(all);
    double best = -1.0;
    for (std::size_t f = 0; f < x.cols(); ++f) {
        std::vector<double> vals;
        for (std::size_t r = 0; r < x.rows(); ++r) vals.push_back(x(r, f));
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
            const double t = 0.5 * (vals[i] + vals[i + 1]);
            std::vector<std::size_t> l, r;
            for (auto j : all) (x(j, f) < t ? l : r).push_back(j);
            const double n = static_cast<double>(all.size());
            best = std::max(best, parent - l.size() / n * g(l) - r.size() / n * g(r));
        }
    }
    return best;
}

}  // namespace

TEST_CASE("gini impurity") {
    const std::vector<std::size_t> pure{4, 0};
    const std::vector<std::size_t> half{2, 2};
    CHECK(gini(pure, 4) == 0.0);
    CHECK(gini(half, 4) == doctest::Approx(0.5));
}

TEST_CASE("perfect separator is found at the midpoint") {
    const auto x = matrix_of(6, 2, {1, 5, 2, 3, 3, 9, 10, 4, 11, 8, 12, 1});
    const std::vector<int> y{0, 0, 0, 1, 1, 1};
    const auto tree = fit_tree(x, y, 2, {12, 1, 0});
    REQUIRE_FALSE(tree.root().is_leaf());
    CHECK(tree.root().feature == 0);
    CHECK(tree.root().threshold == 6.5);
    CHECK(tree.depth() == 1);
    CHECK(tree.predict(x) == y);
}

TEST_CASE("pure node becomes a leaf") {
    const auto x = matrix_of(4, 1, {1, 2, 3, 4});
    const std::vector<int> y{2, 2, 2, 2};
    const auto tree = fit_tree(x, y, 3, {12, 1, 0});
    CHECK(tree.nodes().size() == 1);
    CHECK(tree.root().is_leaf());
    CHECK(tree.predict(std::vector<double>{10.0}) == 2);
    const auto imp = feature_importance(tree);
    CHECK(imp == std::vector<double>{0.0});
}

TEST_CASE("XOR needs depth two") {
    const auto x = matrix_of(4, 2, {0, 0, 0, 1, 1, 0, 1, 1});
    const std::vector<int> y{0, 1, 1, 0};
    CHECK(best_gain_bruteforce(x, y, 2) == doctest::Approx(0.0));
    const auto tree = fit_tree(x, y, 2, {12, 1, 0});
    CHECK(tree.depth() == 2);
    CHECK(tree.predict(x) == y);
}

TEST_CASE("root split matches exhaustive search") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 30, d = 3;
        Matrix x(n, d);
        std::vector<int> y(n);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < d; ++c) x(r, c) = std::round(rng.uniform(0, 20));
            y[r] = static_cast<int>(rng.index(3));
        }
        const auto tree = fit_tree(x, y, 3, {1, 1, 0});
        const double expected = best_gain_bruteforce(x, y, 3);
        if (tree.root().is_leaf()) continue;
        CHECK(tree.root().impurity_decrease == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("min_leaf and max_depth are respected") {
    Rng rng(5);
    const auto x = testing::random_matrix(200, 4, rng, 1.0);
    std::vector<int> y(200);
    for (auto& v : y) v = static_cast<int>(rng.index(4));
    const auto tree = fit_tree(x, y, 4, {4, 7, 0});
    CHECK(tree.depth() <= 4);
    for (const auto& node : tree.nodes()) CHECK(node.n_samples >= 7);
}

TEST_CASE("importances sum to one and follow the informative feature") {
    Rng rng(9);
    Matrix x(300, 3);
    std::vector<int> y(300);
    for (std::size_t r = 0; r < 300; ++r) {
        x(r, 0) = rng.normal();
        x(r, 1) = rng.normal();
        x(r, 2) = rng.normal();
        y[r] = x(r, 1) > 0.2 ? 1 : 0;
    }
    const auto imp = feature_importance(fit_tree(x, y, 2, {12, 5, 0}));
    CHECK(std::accumulate(imp.begin(), imp.end(), 0.0) == doctest::Approx(1.0));
    CHECK(imp[1] > 0.9);
}

TEST_CASE("ranking collapses one-hot blocks and honours the excludelist") {
    std::vector<double> imp;
    std::vector<std::string> parents;
    for (int i = 0; i < 211; ++i) {
        imp.push_back(211 - i);
        parents.push_back("f" + std::to_string(i));
    }
    const auto ranked = rank_features(imp, parents);
    REQUIRE(ranked.size() == 211);
    CHECK(ranked[0].name == "f0");
    CHECK(ranked[0].rank == 1);
    const std::vector<std::string> excluded{"f0", "f5"};
    const auto top = select_top(ranked, 40, excluded);
    REQUIRE(top.size() == 40);
    CHECK(top[0].name == "f1");
    CHECK(top[0].rank == 1);
    CHECK(top[39].rank == 40);
    for (const auto& f : top) CHECK((f.name != "f0" && f.name != "f5"));
    CHECK(top.back().name == "f41");

    const std::vector<double> oh{0.1, 0.3, 0.2, 0.4};
    const std::vector<std::string> oh_parents{"x", "heat", "heat", "z"};
    const auto r2 = rank_features(oh, oh_parents);
    REQUIRE(r2.size() == 3);
    CHECK(r2[0].name == "heat");
    CHECK(r2[0].importance == doctest::Approx(0.5));
}

TEST_CASE("importance CSV and excludelist files") {
    testing::TempDir dir;
    const std::vector<RankedFeature> ranked{{"a", 0.75, 1}, {"b", 0.25, 2}};
    write_importance_csv(dir / "imp.csv", ranked);
    std::ifstream in(dir / "imp.csv");
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    CHECK(header == "feature,importance,rank");
    CHECK(first == "a,0.75,1");

    std::ofstream(dir / "ex.txt") << "# leak\nprimary_energy\n\n co2_emissions \n";
    CHECK(read_excludelist(dir / "ex.txt") == std::vector<std::string>{"primary_energy", "co2_emissions"});
}

TEST_CASE("a single full-feature tree without bootstrap equals the plain tree") {
    Rng rng(2);
    const auto x = testing::random_matrix(80, 3, rng, 1.0);
    std::vector<int> y(80);
    for (std::size_t r = 0; r < 80; ++r) y[r] = x(r, 0) + x(r, 2) > 0 ? 1 : 0;
    ForestParams fp;
    fp.n_trees = 1;
    fp.features_per_split = 3;
    fp.bootstrap = false;
    fp.min_leaf = 2;
    const auto forest = fit_forest(x, y, 2, fp);
    const auto tree = fit_tree(x, y, 2, {12, 2, 0});
    CHECK(predict_forest(forest, x) == tree.predict(x));
    CHECK(feature_importance(forest) == feature_importance(tree));
}

TEST_CASE("forest separates blobs and is deterministic") {
    Rng rng(11);
    Matrix x(150, 4);
    std::vector<int> y(150);
    for (std::size_t r = 0; r < 150; ++r) {
        const int c = static_cast<int>(r % 3);
        y[r] = c;
        for (std::size_t j = 0; j < 4; ++j) x(r, j) = rng.normal(c * 10.0, 1.0);
    }
    ForestParams fp;
    fp.n_trees = 25;
    fp.seed = 4;
    const auto forest = fit_forest(x, y, 3, fp);
    CHECK(forest.features_per_split == 2);
    CHECK(predict_forest(forest, x) == y);
    const auto again = fit_forest(x, y, 3, fp);
    CHECK(feature_importance(again) == feature_importance(forest));
}

TEST_CASE("vote ties go to the lower class") {
    const auto x = matrix_of(2, 1, {0, 1});
    ForestModel model;
    model.n_classes = 3;
    model.trees.push_back(fit_tree(x, std::vector<int>{2, 2}, 3, {1, 1, 0}));
    model.trees.push_back(fit_tree(x, std::vector<int>{1, 1}, 3, {1, 1, 0}));
    CHECK(predict_forest(model, std::vector<double>{0.5}) == 1);
}

TEST_CASE("invalid inputs") {
    const auto x = matrix_of(2, 1, {0, 1});
    CHECK_THROWS(fit_tree(x, std::vector<int>{0}, 2, {}));
    CHECK_THROWS(fit_tree(x, std::vector<int>{0, 5}, 2, {}));
    auto bad = x;
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(fit_tree(bad, std::vector<int>{0, 1}, 2, {}));
}
