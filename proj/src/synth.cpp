#include "clear/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>

#include "clear/io.hpp"
#include "clear/rng.hpp"

namespace clear::synth {

using tabular::BerLevel;
using tabular::Cell;
using tabular::ColumnKind;

namespace {

constexpr std::uint64_t kReferenceSeed = 0x5eedc1ea12ULL;
constexpr std::size_t kReferenceRows = 20000;
constexpr double kLightingWeight = 60.0;

struct BuildingType {
    const char* name;
    double floor_area;  // median m2
    double wall_ratio;  // wall area per floor area
    double roof_ratio;
};

constexpr std::array<BuildingType, 6> kTypes = {{
    {"detached", 150.0, 1.25, 0.75},
    {"semi_detached", 110.0, 1.00, 0.60},
    {"apartment", 70.0, 0.70, 0.25},
    {"terraced", 90.0, 0.80, 0.55},
    {"bungalow", 120.0, 1.10, 1.00},
    {"maisonette", 85.0, 0.85, 0.45},
}};

constexpr std::array<const char*, 8> kCounties = {"Dublin", "Cork",    "Galway",  "Limerick",
                                                  "Waterford", "Kerry", "Donegal", "Mayo"};

std::string type_name(std::size_t t) {
    return t < kTypes.size() ? kTypes[t].name : "type_" + std::to_string(t + 1);
}

BuildingType type_params(std::size_t t) {
    if (t < kTypes.size()) return kTypes[t];
    // Extra types cycle through the base shapes with a size offset.
    auto base = kTypes[t % kTypes.size()];
    base.floor_area *= 1.0 + 0.1 * static_cast<double>(t / kTypes.size());
    return base;
}

double round_to(double x, int decimals) {
    const double scale = std::pow(10.0, decimals);
    return std::round(x * scale) / scale;
}

double lerp(double a, double b, double t) { return a + (b - a) * t; }

struct Features {
    std::size_t type = 0;
    std::size_t county = 0;
    double year_built = 0.0;
    double floor_area = 0.0;
    double wall_area = 0.0;
    double roof_area = 0.0;
    double window_area = 0.0;
    double door_area = 0.0;
    double wall_u = 0.0;
    double roof_u = 0.0;
    double floor_u = 0.0;
    double window_u = 0.0;
    double door_u = 0.0;
    double heating_efficiency = 0.0;
    double water_storage_volume = 0.0;
    double lighting_fraction = 0.0;
};

Features sample_features(Rng& rng, std::size_t n_types, std::optional<double> wall_u_mean) {
    Features f;
    f.type = rng.index(n_types);
    f.county = rng.index(kCounties.size());
    const auto shape = type_params(f.type);
    f.year_built = 1900.0 + static_cast<double>(rng.index(121));
    const double age = (2020.0 - f.year_built) / 120.0;

    f.floor_area = round_to(std::clamp(shape.floor_area * std::exp(rng.normal(0.0, 0.25)), 30.0, 400.0), 1);
    f.wall_area = round_to(f.floor_area * shape.wall_ratio * rng.uniform(0.85, 1.15), 1);
    f.roof_area = round_to(f.floor_area * shape.roof_ratio * rng.uniform(0.85, 1.15), 1);
    f.window_area = round_to(f.floor_area * rng.uniform(0.12, 0.22), 1);
    f.door_area = round_to(rng.uniform(1.8, 5.5), 2);

    auto u_value = [&](double young, double old, double spread) {
        return round_to(std::max(0.05, lerp(young, old, age) * std::exp(rng.normal(0.0, spread))), 2);
    };
    const double wall_noise = std::exp(rng.normal(0.0, 0.15));
    f.wall_u = wall_u_mean ? round_to(std::max(0.05, *wall_u_mean * wall_noise), 2)
                           : round_to(std::max(0.05, lerp(0.18, 2.1, age) * wall_noise), 2);
    f.roof_u = u_value(0.13, 1.6, 0.15);
    f.floor_u = u_value(0.15, 1.1, 0.15);
    f.window_u = u_value(1.0, 4.8, 0.10);
    f.door_u = u_value(1.0, 3.5, 0.10);
    f.heating_efficiency = round_to(std::clamp(lerp(0.95, 0.62, age) + rng.normal(0.0, 0.04), 0.5, 0.99), 3);
    f.water_storage_volume = std::round(rng.uniform(80.0, 250.0));
    f.lighting_fraction = round_to(rng.uniform(0.2, 1.0), 2);
    return f;
}

double noise_free_score(const Features& f) {
    const double fabric = f.wall_area * f.wall_u + f.roof_area * f.roof_u + f.floor_area * f.floor_u +
                          f.window_area * f.window_u + f.door_area * f.door_u;
    return fabric / f.heating_efficiency + kLightingWeight * (1.0 - f.lighting_fraction);
}

/// Gaussian score noise seeded by the feature values themselves, so rows with
/// identical features always receive identical noise and clean level.
double feature_noise(const Features& f) {
    std::uint64_t h = splitmix64(f.type * 1315423911ULL + f.county);
    for (double v : {f.year_built, f.floor_area, f.wall_area, f.roof_area, f.window_area, f.door_area, f.wall_u,
                     f.roof_u, f.floor_u, f.window_u, f.door_u, f.heating_efficiency, f.water_storage_volume,
                     f.lighting_fraction}) {
        h = splitmix64(h ^ std::bit_cast<std::uint64_t>(v));
    }
    Rng rng(h);
    return rng.normal();
}

std::vector<std::size_t> choose_rows(std::size_t n, std::size_t count, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::string make_id(std::size_t i, std::size_t n) {
    std::string digits = std::to_string(i + 1);
    const std::size_t width = std::max<std::size_t>(3, std::to_string(n).size());
    return "B" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

}  // namespace

void SynthConfig::validate() const {
    if (n_rows < 10) throw std::invalid_argument("synth: n_rows must be at least 10");
    if (n_building_types < 1) throw std::invalid_argument("synth: need at least one building type");
    for (double r : {label_noise_rate, feature_corruption_rate}) {
        if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("synth: rates must lie in [0, 1]");
    }
    if (!(score_noise >= 0.0)) throw std::invalid_argument("synth: score noise must be >= 0");
    if (wall_u_mean && !(*wall_u_mean > 0.0)) throw std::invalid_argument("synth: wall U mean must be positive");
}

tabular::FeatureSchema synth_schema(bool compound_features) {
    tabular::FeatureSchema s;
    s.id_column = "building_id";
    s.label_column = "ber_rating";
    s.columns = {
        {"building_type", ColumnKind::categorical, true},
        {"county", ColumnKind::categorical, false},
        {"year_built", ColumnKind::numeric, false},
        {"floor_area", ColumnKind::numeric, false},
        {"wall_area", ColumnKind::numeric, false},
        {"roof_area", ColumnKind::numeric, false},
        {"window_area", ColumnKind::numeric, false},
        {"door_area", ColumnKind::numeric, false},
        {"wall_u", ColumnKind::numeric, false},
        {"roof_u", ColumnKind::numeric, false},
        {"floor_u", ColumnKind::numeric, false},
        {"window_u", ColumnKind::numeric, false},
        {"door_u", ColumnKind::numeric, false},
        {"heating_efficiency", ColumnKind::numeric, false},
        {"water_storage_volume", ColumnKind::numeric, false},
        {"lighting_fraction", ColumnKind::numeric, false},
    };
    if (compound_features) {
        s.columns.push_back({"primary_energy", ColumnKind::numeric, false});
        s.columns.push_back({"co2_emissions", ColumnKind::numeric, false});
    }
    return s;
}

std::array<double, tabular::kFineLevels - 1> score_thresholds(std::size_t n_building_types) {
    static std::mutex cache_mutex;
    static std::map<std::size_t, std::array<double, tabular::kFineLevels - 1>> cache;
    {
        std::lock_guard lock(cache_mutex);
        if (auto it = cache.find(n_building_types); it != cache.end()) return it->second;
    }
    if (n_building_types < 1) throw std::invalid_argument("synth: need at least one building type");
    Rng rng(kReferenceSeed);
    std::vector<double> scores(kReferenceRows);
    for (auto& s : scores) s = noise_free_score(sample_features(rng, n_building_types, std::nullopt));
    std::sort(scores.begin(), scores.end());
    std::array<double, tabular::kFineLevels - 1> cuts{};
    for (std::size_t i = 0; i < cuts.size(); ++i) {
        const double p = static_cast<double>(i + 1) / static_cast<double>(tabular::kFineLevels);
        const double pos = p * static_cast<double>(scores.size() - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, scores.size() - 1);
        cuts[i] = scores[lo] + (pos - static_cast<double>(lo)) * (scores[hi] - scores[lo]);
        if (i > 0 && !(cuts[i] > cuts[i - 1])) {
            throw std::runtime_error("synth: score thresholds are not strictly increasing");
        }
    }
    std::lock_guard lock(cache_mutex);
    cache[n_building_types] = cuts;
    return cuts;
}

int level_for_score(double score, const std::array<double, tabular::kFineLevels - 1>& thresholds) {
    return static_cast<int>(std::lower_bound(thresholds.begin(), thresholds.end(), score) - thresholds.begin());
}

SynthResult generate(const SynthConfig& config) {
    config.validate();
    const auto thresholds = score_thresholds(config.n_building_types);
    const std::size_t n = config.n_rows;

    Rng feature_rng(derive_seed(config.seed, "synth/features"));
    std::vector<Features> rows(n);
    std::vector<double> scores(n);
    GroundTruth truth(n);
    for (std::size_t i = 0; i < n; ++i) {
        rows[i] = sample_features(feature_rng, config.n_building_types, config.wall_u_mean);
        scores[i] = noise_free_score(rows[i]) + config.score_noise * feature_noise(rows[i]);
        truth[i].id = make_id(i, n);
        truth[i].clean = BerLevel::from_ordinal(level_for_score(scores[i], thresholds));
        truth[i].published = truth[i].clean;
    }

    Rng label_rng(derive_seed(config.seed, "synth/label-noise"));
    const auto n_label = static_cast<std::size_t>(std::floor(config.label_noise_rate * static_cast<double>(n)));
    for (auto i : choose_rows(n, n_label, label_rng)) {
        const int clean = truth[i].clean.ordinal();
        int shifted;
        do {
            const int magnitude = kMinLabelShift + static_cast<int>(label_rng.index(kMaxLabelShift - kMinLabelShift + 1));
            shifted = clean + (label_rng.index(2) == 0 ? -magnitude : magnitude);
        } while (shifted < 0 || shifted >= static_cast<int>(tabular::kFineLevels));
        truth[i].published = BerLevel::from_ordinal(shifted);
        truth[i].label_noised = true;
    }

    Rng corrupt_rng(derive_seed(config.seed, "synth/feature-corruption"));
    const auto n_feat =
        static_cast<std::size_t>(std::floor(config.feature_corruption_rate * static_cast<double>(n)));
    for (auto i : choose_rows(n, n_feat, corrupt_rng)) {
        const std::size_t col = corrupt_rng.index(kCorruptibleColumns.size());
        const double factor = kCorruptionFactors[corrupt_rng.index(kCorruptionFactors.size())];
        if (col == 0) {
            rows[i].water_storage_volume *= factor;
        } else {
            rows[i].lighting_fraction = round_to(rows[i].lighting_fraction * factor, 2);
        }
        truth[i].feature_corrupted = true;
        truth[i].corrupted_columns.emplace_back(kCorruptibleColumns[col]);
    }

    SynthResult result{tabular::DataTable(synth_schema(config.compound_features)), std::move(truth)};
    for (std::size_t i = 0; i < n; ++i) {
        const auto& f = rows[i];
        tabular::Record rec;
        rec.id = result.truth[i].id;
        rec.label = result.truth[i].published;
        rec.values = {type_name(f.type),  std::string(kCounties[f.county]),
                      f.year_built,       f.floor_area,
                      f.wall_area,        f.roof_area,
                      f.window_area,      f.door_area,
                      f.wall_u,           f.roof_u,
                      f.floor_u,          f.window_u,
                      f.door_u,           f.heating_efficiency,
                      f.water_storage_volume, f.lighting_fraction};
        if (config.compound_features) {
            const double primary = round_to(scores[i] * 10.0 / f.floor_area, 1);
            rec.values.emplace_back(primary);
            rec.values.emplace_back(round_to(primary * 0.2, 2));
        }
        result.table.add(std::move(rec));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Ground truth files

std::string ground_truth_to_csv(const GroundTruth& truth) {
    std::string out = "id,clean_level,published_level,label_noised,feature_corrupted,corrupted_columns\n";
    for (const auto& r : truth) {
        std::string cols;
        for (std::size_t i = 0; i < r.corrupted_columns.size(); ++i) {
            if (i) cols += ';';
            cols += r.corrupted_columns[i];
        }
        out += io::csv_line({r.id, tabular::format_ber(r.clean), tabular::format_ber(r.published),
                             r.label_noised ? "1" : "0", r.feature_corrupted ? "1" : "0", cols});
    }
    return out;
}

GroundTruth parse_ground_truth(std::string_view text) {
    const auto rows = io::parse_csv(text);
    if (rows.empty()) throw std::runtime_error("ground truth: empty file");
    const std::vector<std::string> expected = {"id",           "clean_level",       "published_level",
                                               "label_noised", "feature_corrupted", "corrupted_columns"};
    const auto& header = rows.front();
    std::vector<std::size_t> pos;
    for (const auto& name : expected) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw std::runtime_error("ground truth: missing column '" + name + "'");
        pos.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    auto parse_flag = [](const std::string& s, std::size_t line) {
        if (s == "1") return true;
        if (s == "0") return false;
        throw std::runtime_error("ground truth: row " + std::to_string(line) + " has bad flag '" + s + "'");
    };
    GroundTruth truth;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() == 1 && row[0].empty()) continue;
        if (row.size() != header.size()) {
            throw std::runtime_error("ground truth: row " + std::to_string(r) + " has the wrong field count");
        }
        GroundTruthRow g;
        g.id = row[pos[0]];
        try {
            g.clean = tabular::parse_ber(row[pos[1]]);
            g.published = tabular::parse_ber(row[pos[2]]);
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error("ground truth: row " + std::to_string(r) + ": " + e.what());
        }
        g.label_noised = parse_flag(row[pos[3]], r);
        g.feature_corrupted = parse_flag(row[pos[4]], r);
        const auto& cols = row[pos[5]];
        std::size_t start = 0;
        while (!cols.empty() && start <= cols.size()) {
            auto end = cols.find(';', start);
            if (end == std::string::npos) end = cols.size();
            g.corrupted_columns.push_back(cols.substr(start, end - start));
            start = end + 1;
        }
        truth.push_back(std::move(g));
    }
    return truth;
}

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& truth) {
    io::write_file_atomic(path, ground_truth_to_csv(truth));
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
    return parse_ground_truth(io::read_file(path));
}

}  // namespace clear::synth
