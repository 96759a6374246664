#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace clear::tabular {

// ---------------------------------------------------------------------------
// BER scale

inline constexpr std::size_t kFineLevels = 15;
inline constexpr std::size_t kCoarseLevels = 5;

inline constexpr std::array<std::string_view, kFineLevels> kFineTokens = {
    "A1", "A2", "A3", "B1", "B2", "B3", "C1", "C2", "C3", "D1", "D2", "E1", "E2", "F", "G"};
inline constexpr std::array<std::string_view, kCoarseLevels> kCoarseTokens = {"A", "B", "C", "D",
                                                                            "EFG"};

/// One of the 15 ordered rating levels; ordinal 0 is A1 (best), 14 is G.
class BerLevel {
public:
    constexpr BerLevel() = default;
    static BerLevel from_ordinal(int ordinal);

    constexpr int ordinal() const { return ordinal_; }
    std::string_view fine() const { return kFineTokens[static_cast<std::size_t>(ordinal_)]; }
    /// Coarse band index 0..4 (A, B, C, D, EFG).
    int coarse_index() const;
    std::string_view coarse() const { return kCoarseTokens[static_cast<std::size_t>(coarse_index())]; }

    friend constexpr auto operator<=>(BerLevel, BerLevel) = default;

private:
    constexpr explicit BerLevel(int ordinal) : ordinal_(ordinal) {}
    int ordinal_ = 0;
};

/// Case-insensitive; throws std::invalid_argument listing the valid tokens.
BerLevel parse_ber(std::string_view token);
std::string format_ber(BerLevel level);

/// Fine ordinal (0..14) to coarse index (0..4).
int coarsen(int fine_ordinal);

// ---------------------------------------------------------------------------
// Schema

enum class ColumnKind { numeric, categorical };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    bool group_key = false;

    friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

std::vector<std::string> default_missing_tokens();

struct FeatureSchema {
    std::vector<ColumnSpec> columns;
    std::string label_column;
    std::string id_column;
    std::vector<std::string> missing_tokens = default_missing_tokens();

    /// Throws std::invalid_argument on a broken invariant.
    void validate() const;

    std::optional<std::size_t> index_of(std::string_view name) const;
    std::optional<std::size_t> group_key_index() const;
    bool is_missing_token(std::string_view text) const;

    /// Stable hash over column names, kinds and flags plus the id/label names.
    std::uint64_t hash() const;

    friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

FeatureSchema parse_schema_json(std::string_view text);
std::string schema_to_json(const FeatureSchema& schema);
FeatureSchema load_schema(const std::filesystem::path& path);
void save_schema(const std::filesystem::path& path, const FeatureSchema& schema);

// ---------------------------------------------------------------------------
// Records

/// Missing, numeric, or categorical token.
using Cell = std::variant<std::monostate, double, std::string>;

inline bool is_missing(const Cell& cell) { return std::holds_alternative<std::monostate>(cell); }

struct Record {
    std::string id;
    std::vector<Cell> values;
    std::optional<BerLevel> label;

    friend bool operator==(const Record&, const Record&) = default;
};

/// Column-typed record collection. Rows match the schema's arity and kinds
/// and ids are unique; both are enforced on every insertion.
class DataTable {
public:
    DataTable() = default;
    explicit DataTable(FeatureSchema schema);

    const FeatureSchema& schema() const { return schema_; }
    std::size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }

    const std::vector<Record>& rows() const { return rows_; }
    const Record& row(std::size_t i) const { return rows_.at(i); }

    void add(Record record);

    std::optional<std::size_t> find(std::string_view id) const;
    std::vector<std::string> ids() const;

    /// Count of missing cells across all rows and columns.
    std::size_t missing_count() const;

    /// Table with the rows at the given indices, in that order.
    DataTable subset(std::span<const std::size_t> indices) const;

    friend bool operator==(const DataTable& a, const DataTable& b) {
        return a.schema_ == b.schema_ && a.rows_ == b.rows_;
    }

private:
    FeatureSchema schema_;
    std::vector<Record> rows_;
    std::unordered_map<std::string, std::size_t> index_;
};

DataTable parse_csv_table(std::string_view text, const FeatureSchema& schema);
DataTable load_csv(const std::filesystem::path& path, const FeatureSchema& schema);
std::string table_to_csv(const DataTable& table);
void write_csv(const std::filesystem::path& path, const DataTable& table);

/// Labels as fine ordinals; throws if any row is unlabeled.
std::vector<int> label_ordinals(const DataTable& table);

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
    double train_frac = 0.8;
    double val_frac = 0.1;
    double test_frac = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitSizes {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

/// val and test take round-half-up shares of n, train takes the remainder.
SplitSizes split_sizes(std::size_t n, const SplitSpec& spec);

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

/// Seeded Fisher-Yates permutation cut into train/val/test blocks.
SplitIndices split_indices(std::size_t n, const SplitSpec& spec);

struct TableSplit {
    DataTable train, val, test;
};

TableSplit split(const DataTable& table, const SplitSpec& spec);

}  // namespace clear::tabular
