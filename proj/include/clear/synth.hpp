#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "clear/tabular.hpp"

namespace clear::synth {

struct SynthConfig {
    std::size_t n_rows = 5000;
    std::size_t n_building_types = 4;
    double label_noise_rate = 0.05;
    double feature_corruption_rate = 0.05;
    /// Deviation of the Gaussian term added to the energy score.
    double score_noise = 5.0;
    std::uint64_t seed = 0;
    /// Forces the wall U-value regime (W/m2K) instead of the age-driven one.
    std::optional<double> wall_u_mean;
    /// Adds rating-derived columns (primary energy, CO2) that feature
    /// selection is expected to exclude.
    bool compound_features = false;

    void validate() const;
};

/// Columns whose values may be multiplied by an abnormal factor.
inline constexpr std::array<const char*, 2> kCorruptibleColumns = {"water_storage_volume", "lighting_fraction"};
inline constexpr std::array<double, 3> kCorruptionFactors = {10.0, 50.0, 100.0};
inline constexpr int kMinLabelShift = 3;
inline constexpr int kMaxLabelShift = 7;

struct GroundTruthRow {
    std::string id;
    tabular::BerLevel clean;
    tabular::BerLevel published;
    bool label_noised = false;
    bool feature_corrupted = false;
    std::vector<std::string> corrupted_columns;

    friend bool operator==(const GroundTruthRow&, const GroundTruthRow&) = default;
};

using GroundTruth = std::vector<GroundTruthRow>;

struct SynthResult {
    tabular::DataTable table;
    GroundTruth truth;
};

tabular::FeatureSchema synth_schema(bool compound_features = false);

/// The 14 ascending score cut points: the 15-quantile grid of noise-free
/// scores over a fixed large reference draw.
std::array<double, tabular::kFineLevels - 1> score_thresholds(std::size_t n_building_types);

/// Clean ordinal for a score: number of thresholds strictly below it.
int level_for_score(double score, const std::array<double, tabular::kFineLevels - 1>& thresholds);

SynthResult generate(const SynthConfig& config);

std::string ground_truth_to_csv(const GroundTruth& truth);
GroundTruth parse_ground_truth(std::string_view text);
void write_ground_truth(const std::filesystem::path& path, const GroundTruth& truth);
GroundTruth read_ground_truth(const std::filesystem::path& path);

}  // namespace clear::synth
