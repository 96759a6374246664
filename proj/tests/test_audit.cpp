#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "clear/audit.hpp"
#include "test_support.hpp"

using namespace clear;
using namespace clear::audit;
using clear::latent::EmbeddingStore;
using clear::tabular::BerLevel;
using clear::tabular::parse_ber;

namespace {

using Labels = std::vector<std::optional<BerLevel>>;

EmbeddingStore line_store(const std::vector<std::string>& levels) {
    std::vector<std::string> ids;
    Matrix x(levels.size(), 1);
    Labels labels;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        ids.push_back("b" + std::to_string(i));
        x(i, 0) = static_cast<double>(i);
        labels.push_back(levels[i].empty() ? std::nullopt : std::optional(parse_ber(levels[i])));
    }
    return EmbeddingStore(ids, x, labels);
}

}  // namespace

TEST_CASE("spread of the reported cases") {
    const std::vector<AuditNeighbor> d1{{"n", parse_ber("D1"), 0.1}};
    CHECK(rating_spread(parse_ber("A3"), d1) == 7);
    // A3 and C2 sit at ordinals 2 and 7 of the 15-level scale.
    const std::vector<AuditNeighbor> c2{{"n", parse_ber("C2"), 1e-9}};
    CHECK(rating_spread(parse_ber("A3"), c2) == 5);
    CHECK(rating_spread(parse_ber("C2"), std::vector<AuditNeighbor>{{"n", parse_ber("A3"), 0.0}}) == 5);
    CHECK(rating_spread(parse_ber("A3"), {}) == 0);

    const auto store = line_store({"A3", "D1", "B1"});
    AuditConfig cfg;
    cfg.k = 1;
    const auto f = audit_one(store, "b0", cfg);
    CHECK(f.spread == 7);
    CHECK(f.flagged);
    REQUIRE(f.neighbors.size() == 1);
    CHECK(f.neighbors[0].id == "b1");
}

TEST_CASE("same levels are never flagged") {
    const auto store = line_store({"B2", "B2", "B2", "B2"});
    AuditConfig cfg;
    cfg.k = 3;
    const auto report = audit_all(store, cfg);
    CHECK(report.n_flagged == 0);
    CHECK(report.spread_histogram[0] == 4);
}

TEST_CASE("identical vectors with every level") {
    std::vector<std::string> ids;
    Labels labels;
    for (int o = 0; o < 15; ++o) {
        ids.push_back("x" + std::to_string(100 + o));
        labels.push_back(BerLevel::from_ordinal(o));
    }
    const EmbeddingStore store(ids, Matrix(15, 3), labels);
    AuditConfig cfg;
    cfg.k = 14;
    const auto report = audit_all(store, cfg);
    CHECK(report.n_flagged == 15);
    CHECK(report.flag_rate() == 1.0);
    // Spread is the larger distance to either end of the scale.
    for (const auto& f : report.findings) {
        const int o = f.ref_level.ordinal();
        CHECK(f.spread == std::max(o, 14 - o));
    }
}

TEST_CASE("unlabeled rows: neighbors skip them, refs error") {
    const auto store = line_store({"A1", "", "G", "A1"});
    AuditConfig cfg;
    cfg.k = 1;
    const auto f = audit_one(store, "b0", cfg);
    REQUIRE(f.neighbors.size() == 1);
    CHECK(f.neighbors[0].id == "b2");
    CHECK_THROWS(audit_one(store, "b1", cfg));
    const auto report = audit_all(store, cfg);
    CHECK(report.n_skipped_unlabeled == 1);
    CHECK(report.findings.size() == 3);
}

TEST_CASE("radius filter can leave no neighbors") {
    const auto store = line_store({"A1", "G", "G"});
    AuditConfig cfg;
    cfg.k = 2;
    cfg.radius = 0.5;
    const auto f = audit_one(store, "b0", cfg);
    CHECK(f.neighbors.empty());
    CHECK(f.spread == 0);
    CHECK_FALSE(f.flagged);
    cfg.radius = 1.5;
    CHECK(audit_one(store, "b0", cfg).neighbors.size() == 1);
}

TEST_CASE("config validation") {
    AuditConfig cfg;
    cfg.k = 0;
    CHECK_THROWS(cfg.validate());
    cfg = {};
    cfg.spread_threshold = 0;
    CHECK_THROWS(cfg.validate());
    cfg = {};
    cfg.radius = -1.0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("monotone in the threshold and consistent counts") {
    Rng rng(3);
    const std::size_t n = 300;
    std::vector<std::string> ids;
    Labels labels;
    for (std::size_t i = 0; i < n; ++i) {
        ids.push_back("r" + std::to_string(i));
        labels.push_back(BerLevel::from_ordinal(static_cast<int>(rng.index(15))));
    }
    const EmbeddingStore store(ids, testing::random_matrix(n, 5, rng, 1.0), labels);
    std::size_t previous = n + 1;
    for (int t = 1; t <= 14; ++t) {
        AuditConfig cfg;
        cfg.spread_threshold = t;
        const auto report = audit_all(store, cfg);
        CHECK(report.n_flagged <= previous);
        previous = report.n_flagged;
        std::size_t flagged = 0, total = 0;
        for (const auto& f : report.findings) {
            CHECK(f.flagged == (f.spread >= t));
            flagged += f.flagged;
            for (std::size_t j = 1; j < f.neighbors.size(); ++j) {
                CHECK(f.neighbors[j].distance >= f.neighbors[j - 1].distance);
            }
        }
        for (auto c : report.spread_histogram) total += c;
        CHECK(flagged == report.n_flagged);
        CHECK(total == report.findings.size());
        CHECK(std::is_sorted(report.findings.begin(), report.findings.end(),
                             [](const auto& a, const auto& b) { return a.ref_id < b.ref_id; }));
    }
}

TEST_CASE("report CSV layout") {
    const auto store = line_store({"A3", "D1", "B1"});
    AuditConfig cfg;
    cfg.k = 2;
    const auto csv = report_to_csv(audit_all(store, cfg));
    const auto first_line = csv.substr(0, csv.find('\n'));
    CHECK(first_line == "ref_id,ref_level,spread,flagged,neighbor_ids,neighbor_levels,neighbor_distances");
    CHECK(csv.find("b0,A3,7,1,b1;b2,D1;B1,1;2") != std::string::npos);
}

TEST_CASE("feature table, outlier marks and box-plot statistics") {
    tabular::FeatureSchema schema;
    schema.id_column = "id";
    schema.label_column = "ber";
    schema.columns = {{"type", tabular::ColumnKind::categorical, true},
                      {"lighting_fraction", tabular::ColumnKind::numeric, false},
                      {"water_storage_volume", tabular::ColumnKind::numeric, false}};
    tabular::DataTable raw(schema);
    std::vector<std::string> ids;
    Labels labels;
    for (int i = 0; i < 11; ++i) {
        const std::string id = "h" + std::to_string(10 + i);
        const double water = i == 4 ? 5000.0 : 100.0 + i;
        raw.add({id, {std::string("house"), 0.1 * i, water}, BerLevel::from_ordinal(i)});
        ids.push_back(id);
        labels.push_back(BerLevel::from_ordinal(i));
    }
    Matrix x(11, 1);
    for (std::size_t i = 0; i < 11; ++i) x(i, 0) = static_cast<double>(i);
    const EmbeddingStore store(ids, x, labels);
    const auto finding = audit_one(store, "h10", AuditConfig{});
    const auto fences = fences_from_table(raw);
    const std::vector<std::string> cols{"lighting_fraction", "water_storage_volume"};
    const auto table = feature_table(raw, finding, cols, fences);
    REQUIRE(table.rows.size() == 11);
    CHECK(table.rows[0].role == "reference");
    CHECK(table.rows[0].id == "h10");
    for (const auto& row : table.rows) {
        CHECK(row.marks[1] == (row.id == "h14" ? "high" : ""));
    }

    REQUIRE(table.summary.size() == 2);
    const auto& light = table.summary[0];
    CHECK(light.column == "lighting_fraction");
    CHECK(light.count == 11);
    CHECK(light.min == 0.0);
    CHECK(light.q1 == doctest::Approx(0.25));
    CHECK(light.median == doctest::Approx(0.5));
    CHECK(light.q3 == doctest::Approx(0.75));
    CHECK(light.max == doctest::Approx(1.0));

    AuditFinding ghost = finding;
    ghost.neighbors.push_back({"nope", BerLevel::from_ordinal(0), 9.0});
    CHECK_THROWS(feature_table(raw, ghost, cols, fences));

    testing::TempDir dir;
    write_boxplot_csv(dir / "box.csv", table.summary);
    std::ifstream in(dir / "box.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "column,count,min,q1,median,q3,max");
}
