#include <doctest.h>

#include <cmath>

#include "clear/preprocess.hpp"
#include "clear/synth.hpp"
#include "test_support.hpp"

using namespace clear;
using namespace clear::tabular;
using namespace clear::preprocess;

namespace {

FeatureSchema schema_xy() {
    FeatureSchema s;
    s.id_column = "id";
    s.label_column = "ber";
    s.columns = {{"type", ColumnKind::categorical, true}, {"x", ColumnKind::numeric, false},
                 {"heat", ColumnKind::categorical, false}};
    return s;
}

DataTable table_of(const std::vector<std::tuple<std::string, Cell, Cell>>& rows) {
    DataTable t(schema_xy());
    int i = 0;
    for (const auto& [type, x, heat] : rows) {
        t.add({"r" + std::to_string(i++), {type.empty() ? Cell{} : Cell{type}, x, heat}, std::nullopt});
    }
    return t;
}

}  // namespace

TEST_CASE("quantiles interpolate at p*(n-1)") {
    const std::vector<double> v{1, 2, 3, 4, 100};
    CHECK(quantile_sorted(v, 0.25) == 2.0);
    CHECK(quantile_sorted(v, 0.75) == 4.0);
    CHECK(quantile_sorted(v, 0.5) == 3.0);
    const std::vector<double> w{0, 10};
    CHECK(quantile_sorted(w, 0.25) == doctest::Approx(2.5));
}

TEST_CASE("IQR fences") {
    const auto t = table_of({{"T", 1.0, "g"}, {"T", 2.0, "g"}, {"T", 3.0, "g"}, {"T", 4.0, "g"}, {"T", 100.0, "g"}});
    const auto st = fit(t, 1.5);
    REQUIRE(st.numeric.size() == 1);
    CHECK(st.numeric[0].q1 == 2.0);
    CHECK(st.numeric[0].q3 == 4.0);
    CHECK(st.numeric[0].lower_fence == -1.0);
    CHECK(st.numeric[0].upper_fence == 7.0);
    TransformSummary summary;
    transform(st, t, &summary);
    CHECK(summary.clipped == 1);

    const auto clean = table_of({{"T", 1.0, "g"}, {"T", 2.0, "g"}, {"T", 3.0, "g"}, {"T", 4.0, "g"}, {"T", 5.0, "g"}});
    const auto st2 = fit(clean, 1.5);
    transform(st2, clean, &summary);
    CHECK(summary.clipped == 0);
}

TEST_CASE("group imputation uses the building type mean and mode") {
    const auto t = table_of({{"T", 2.0, "apt"}, {"T", 4.0, "apt"}, {"T", Cell{}, Cell{}}, {"T", 3.0, "house"},
                             {"U", 10.0, "house"}, {"U", 12.0, "house"}});
    const auto st = fit(t, 100.0);
    CHECK(st.numeric[0].group_means.at("T") == doctest::Approx(3.0));
    CHECK(st.numeric[0].group_means.at("U") == doctest::Approx(11.0));
    CHECK(st.categorical[1].group_modes.at("T") == "apt");
    CHECK(st.categorical[1].global_mode == "house");

    const auto clean = clean_numeric(st, t);
    CHECK(clean(2, 0) == doctest::Approx(3.0));

    const auto m = transform(st, t);
    const auto names = st.encoded_names();
    const auto apt = std::find(names.begin(), names.end(), "heat=apt") - names.begin();
    CHECK(m(2, static_cast<std::size_t>(apt)) == 1.0);
}

TEST_CASE("unseen group falls back to global statistics") {
    const auto t = table_of({{"T", 2.0, "apt"}, {"T", 4.0, "apt"}, {"U", 6.0, "house"}, {"U", 8.0, "house"}});
    const auto st = fit(t, 100.0);
    const auto probe = table_of({{"V", Cell{}, Cell{}}});
    const auto clean = clean_numeric(st, probe);
    CHECK(clean(0, 0) == doctest::Approx(5.0));
}

TEST_CASE("mode ties break lexicographically") {
    const auto t = table_of({{"T", 1.0, "b"}, {"T", 2.0, "a"}, {"T", 3.0, "c"}, {"T", 4.0, "b"}, {"T", 5.0, "a"}});
    const auto st = fit(t, 1.5);
    CHECK(st.categorical[1].global_mode == "a");
}

TEST_CASE("standardization and one-hot encoding") {
    const auto t = table_of({{"T", 0.0, "apt"}, {"T", 2.0, "house"}});
    const auto st = fit(t, 1.5);
    const auto m = transform(st, t);
    CHECK(m(0, 0) == -1.0);
    CHECK(m(1, 0) == 1.0);
    CHECK(st.encoded_names() == std::vector<std::string>{"x", "type=T", "heat=apt", "heat=house"});
    CHECK(m(1, 2) == 0.0);
    CHECK(m(1, 3) == 1.0);

    TransformSummary summary;
    const auto probe = transform(st, table_of({{"T", 1.0, "barn"}}), &summary);
    CHECK(summary.unseen_categories == 1);
    CHECK(probe(0, 2) == 0.0);
    CHECK(probe(0, 3) == 0.0);
}

TEST_CASE("constant columns are flagged and left unscaled") {
    const auto t = table_of({{"T", 4.0, "a"}, {"T", 4.0, "a"}, {"T", 4.0, "a"}});
    const auto st = fit(t, 1.5);
    CHECK(st.numeric[0].constant);
    CHECK(st.numeric[0].stddev == 1.0);
    const auto m = transform(st, t);
    CHECK(m(0, 0) == 0.0);
}

TEST_CASE("fit errors") {
    CHECK_THROWS(fit(DataTable(schema_xy()), 1.5));
    CHECK_THROWS_WITH(fit(table_of({{"T", Cell{}, "a"}, {"T", Cell{}, "b"}}), 1.5), doctest::Contains("'x'"));
    auto s = schema_xy();
    s.columns[0].group_key = false;
    DataTable t(s);
    t.add({"a", {std::string("T"), 1.0, std::string("x")}, std::nullopt});
    CHECK_THROWS_WITH(fit(t, 1.5), doctest::Contains("group_key"));
}

TEST_CASE("transform invariants on synthetic data") {
    synth::SynthConfig cfg;
    cfg.n_rows = 600;
    cfg.seed = 3;
    const auto data = synth::generate(cfg);
    const auto st = fit(data.table, 1.5);
    const auto m = transform(st, data.table);
    const std::size_t n = m.rows();
    for (std::size_t c = 0; c < st.numeric.size(); ++c) {
        double mean = 0.0, ss = 0.0;
        for (std::size_t r = 0; r < n; ++r) mean += m(r, c);
        mean /= static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) ss += (m(r, c) - mean) * (m(r, c) - mean);
        CHECK(std::abs(mean) < 1e-9);
        if (!st.numeric[c].constant) CHECK(std::abs(std::sqrt(ss / static_cast<double>(n)) - 1.0) < 1e-9);
    }
    std::size_t offset = st.numeric.size();
    for (const auto& cat : st.categorical) {
        for (std::size_t r = 0; r < n; ++r) {
            double sum = 0.0;
            for (std::size_t j = 0; j < cat.vocabulary.size(); ++j) sum += m(r, offset + j);
            CHECK(sum == 1.0);
        }
        offset += cat.vocabulary.size();
    }
    const auto clean = clean_numeric(st, data.table);
    for (std::size_t c = 0; c < st.numeric.size(); ++c) {
        for (std::size_t r = 0; r < n; ++r) {
            CHECK(clean(r, c) >= st.numeric[c].lower_fence);
            CHECK(clean(r, c) <= st.numeric[c].upper_fence);
        }
    }
    CHECK(transform(st, data.table) == m);
}

TEST_CASE("state save/load round trip is exact") {
    synth::SynthConfig cfg;
    cfg.n_rows = 300;
    cfg.seed = 4;
    const auto data = synth::generate(cfg);
    const auto st = fit(data.table, 1.5);
    testing::TempDir dir;
    save_state(dir / "state.json", st);
    const auto back = load_state(dir / "state.json", data.table.schema());
    CHECK(back == st);
    CHECK(transform(back, data.table) == transform(st, data.table));
}

TEST_CASE("state loading rejects bad files") {
    CHECK_THROWS_WITH(state_from_json(R"({"numeric":{},"categorical":{}})"), doctest::Contains("version"));
    CHECK_THROWS_WITH(state_from_json(R"({"version":2})"), doctest::Contains("version"));

    const auto t = table_of({{"T", 0.0, "apt"}, {"T", 2.0, "house"}});
    const auto st = fit(t, 1.5);
    testing::TempDir dir;
    save_state(dir / "s.json", st);
    auto other = schema_xy();
    other.columns[1].name = "y";
    CHECK_THROWS_WITH(load_state(dir / "s.json", other), doctest::Contains("different schema"));

    DataTable wrong(other);
    wrong.add({"a", {std::string("T"), 1.0, std::string("apt")}, std::nullopt});
    CHECK_THROWS(transform(st, wrong));
}
