#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clear/latent.hpp"
#include "clear/preprocess.hpp"
#include "clear/tabular.hpp"

namespace clear::audit {

/// A reference building is flagged when some counted neighbor's rating sits
/// at least `spread_threshold` ordinal steps away from its own. This is a
/// working definition of "inconsistent": one full coarse band by default.
struct AuditConfig {
    std::size_t k = 10;
    std::optional<double> radius;
    int spread_threshold = 3;
    latent::Metric metric = latent::Metric::euclidean;

    void validate() const;
};

struct AuditNeighbor {
    std::string id;
    tabular::BerLevel level;
    double distance = 0.0;
};

struct AuditFinding {
    std::string ref_id;
    tabular::BerLevel ref_level;
    std::vector<AuditNeighbor> neighbors;  // ascending distance
    int spread = 0;
    bool flagged = false;
};

struct AuditReport {
    AuditConfig config;
    std::vector<AuditFinding> findings;  // ordered by ref id
    std::size_t n_flagged = 0;
    std::size_t n_skipped_unlabeled = 0;
    std::array<std::size_t, tabular::kFineLevels> spread_histogram{};

    double flag_rate() const;
};

/// Largest |ordinal(ref) - ordinal(neighbor)| over the neighbors; 0 if none.
int rating_spread(tabular::BerLevel ref, std::span<const AuditNeighbor> neighbors);

AuditFinding audit_one(const latent::EmbeddingStore& store, std::string_view ref_id, const AuditConfig& config);

/// Audits every labeled row; unlabeled rows are counted and skipped.
AuditReport audit_all(const latent::EmbeddingStore& store, const AuditConfig& config);

/// `ref_id,ref_level,spread,flagged,neighbor_ids,neighbor_levels,neighbor_distances`
std::string report_to_csv(const AuditReport& report);
std::string summary_to_json(const AuditReport& report);
void write_report_csv(const std::filesystem::path& path, const AuditReport& report);
void write_summary_json(const std::filesystem::path& path, const AuditReport& report);

// ---------------------------------------------------------------------------
// Neighbor feature tables

struct Fence {
    double lower = 0.0;
    double upper = 0.0;
};

using FenceMap = std::map<std::string, Fence>;

FenceMap fences_from_state(const preprocess::PreprocessorState& state);
/// Global IQR fences over a raw table's numeric columns.
FenceMap fences_from_table(const tabular::DataTable& table, double iqr_multiplier = 1.5);

struct BoxStats {
    std::string column;
    std::size_t count = 0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

struct FeatureTableRow {
    std::string role;  // "reference" or "neighbor"
    std::string id;
    std::string level;
    double distance = 0.0;
    std::vector<std::string> values;
    std::vector<std::string> marks;  // "high", "low" or ""
};

struct FeatureTable {
    std::vector<std::string> columns;
    std::vector<FeatureTableRow> rows;
    std::vector<BoxStats> summary;  // numeric columns only, over the whole raw table
};

/// Reference row followed by its neighbors, with the chosen raw columns and
/// outlier marks against `fences`. Empty `columns` selects every column.
FeatureTable feature_table(const tabular::DataTable& raw, const AuditFinding& finding,
                           std::span<const std::string> columns, const FenceMap& fences);

void write_feature_table_csv(const std::filesystem::path& path, const FeatureTable& table);
/// `column,count,min,q1,median,q3,max`
void write_boxplot_csv(const std::filesystem::path& path, std::span<const BoxStats> summary);

}  // namespace clear::audit
