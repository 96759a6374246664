#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "clear/matrix.hpp"
#include "clear/tabular.hpp"

namespace clear::preprocess {

inline constexpr int kStateVersion = 1;

struct NumericStats {
    std::string name;
    double q1 = 0.0;
    double q3 = 0.0;
    double lower_fence = 0.0;
    double upper_fence = 0.0;
    double global_mean = 0.0;
    std::map<std::string, double> group_means;
    double mean = 0.0;    // standardization centre, after clipping and imputation
    double stddev = 1.0;  // population deviation; 1 when the column is constant
    bool constant = false;

    friend bool operator==(const NumericStats&, const NumericStats&) = default;
};

struct CategoricalStats {
    std::string name;
    std::vector<std::string> vocabulary;  // sorted
    std::string global_mode;
    std::map<std::string, std::string> group_modes;

    friend bool operator==(const CategoricalStats&, const CategoricalStats&) = default;
};

/// Statistics fitted on a training table. Numeric and categorical entries
/// follow the schema's column order.
struct PreprocessorState {
    std::uint64_t schema_hash = 0;
    std::string group_column;
    double iqr_multiplier = 1.5;
    std::size_t fitted_on = 0;
    std::vector<NumericStats> numeric;
    std::vector<CategoricalStats> categorical;

    /// Encoded column names: numerics, then `name=token` per one-hot slot.
    std::vector<std::string> encoded_names() const;
    /// Source feature of each encoded column.
    std::vector<std::string> encoded_parents() const;
    std::size_t encoded_width() const;

    const NumericStats* find_numeric(std::string_view name) const;

    friend bool operator==(const PreprocessorState&, const PreprocessorState&) = default;
};

/// Quantile by linear interpolation at position p*(n-1) of sorted data.
double quantile_sorted(std::span<const double> sorted, double p);

/// Fits fences, group imputation statistics, scaling and vocabularies.
PreprocessorState fit(const tabular::DataTable& train, double iqr_multiplier = 1.5);

struct TransformSummary {
    std::size_t unseen_categories = 0;
    std::size_t imputed_numeric = 0;
    std::size_t imputed_categorical = 0;
    std::size_t clipped = 0;
};

/// clip -> impute numerics -> impute categoricals -> standardize -> one-hot.
Matrix transform(const PreprocessorState& state, const tabular::DataTable& table,
                 TransformSummary* summary = nullptr);

/// Clipped and imputed numeric values before standardization (rows x numerics).
Matrix clean_numeric(const PreprocessorState& state, const tabular::DataTable& table);

std::string state_to_json(const PreprocessorState& state);
PreprocessorState state_from_json(std::string_view text);
void save_state(const std::filesystem::path& path, const PreprocessorState& state);
PreprocessorState load_state(const std::filesystem::path& path);
/// load_state plus a check that the state was fitted on `schema`.
PreprocessorState load_state(const std::filesystem::path& path, const tabular::FeatureSchema& schema);

}  // namespace clear::preprocess
