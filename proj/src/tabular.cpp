#include "clear/tabular.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "clear/io.hpp"
#include "clear/rng.hpp"

namespace clear::tabular {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// BER scale

BerLevel BerLevel::from_ordinal(int ordinal) {
    if (ordinal < 0 || ordinal >= static_cast<int>(kFineLevels)) {
        throw std::out_of_range("BER ordinal " + std::to_string(ordinal) + " outside 0..14");
    }
    return BerLevel(ordinal);
}

int BerLevel::coarse_index() const { return coarsen(ordinal_); }

int coarsen(int fine_ordinal) {
    if (fine_ordinal < 0 || fine_ordinal >= static_cast<int>(kFineLevels)) {
        throw std::out_of_range("BER ordinal " + std::to_string(fine_ordinal) + " outside 0..14");
    }
    // A1-A3, B1-B3, C1-C3 are blocks of three; D1,D2 is D; E1 onwards is EFG.
    if (fine_ordinal < 9) return fine_ordinal / 3;
    if (fine_ordinal < 11) return 3;
    return 4;
}

BerLevel parse_ber(std::string_view token) {
    const std::string key = upper(trim(token));
    for (std::size_t i = 0; i < kFineTokens.size(); ++i) {
        if (kFineTokens[i] == key) return BerLevel::from_ordinal(static_cast<int>(i));
    }
    std::string valid;
    for (auto t : kFineTokens) {
        if (!valid.empty()) valid += ", ";
        valid += t;
    }
    throw std::invalid_argument("unknown BER level '" + std::string(token) +
                                "'; valid levels: " + valid);
}

std::string format_ber(BerLevel level) { return std::string(level.fine()); }

// ---------------------------------------------------------------------------
// Schema

std::vector<std::string> default_missing_tokens() { return {"", "NA", "NaN", "null"}; }

void FeatureSchema::validate() const {
    if (id_column.empty()) throw std::invalid_argument("schema: id_column is required");
    if (label_column.empty()) throw std::invalid_argument("schema: label_column is required");
    if (id_column == label_column) {
        throw std::invalid_argument("schema: id_column and label_column must differ");
    }
    if (columns.empty()) throw std::invalid_argument("schema: at least one feature column is required");
    std::set<std::string> seen{id_column, label_column};
    std::size_t group_keys = 0;
    for (const auto& c : columns) {
        if (c.name.empty()) throw std::invalid_argument("schema: empty column name");
        if (!seen.insert(c.name).second) {
            throw std::invalid_argument("schema: duplicate column name '" + c.name + "'");
        }
        if (c.group_key) {
            ++group_keys;
            if (c.kind != ColumnKind::categorical) {
                throw std::invalid_argument("schema: group key column '" + c.name +
                                            "' must be categorical");
            }
        }
    }
    if (group_keys > 1) throw std::invalid_argument("schema: at most one group_key column allowed");
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].name == name) return i;
    }
    return std::nullopt;
}

std::optional<std::size_t> FeatureSchema::group_key_index() const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].group_key) return i;
    }
    return std::nullopt;
}

bool FeatureSchema::is_missing_token(std::string_view text) const {
    const std::string key = lower(trim(text));
    return std::any_of(missing_tokens.begin(), missing_tokens.end(),
                       [&](const std::string& t) { return lower(t) == key; });
}

std::uint64_t FeatureSchema::hash() const {
    std::string canon = id_column + '\x1f' + label_column + '\x1e';
    for (const auto& c : columns) {
        canon += c.name;
        canon += c.kind == ColumnKind::numeric ? ":n" : ":c";
        canon += c.group_key ? ":g" : "";
        canon += '\x1e';
    }
    return fnv1a64(canon);
}

FeatureSchema parse_schema_json(std::string_view text) {
    FeatureSchema schema;
    json doc;
    try {
        doc = json::parse(text);
        for (const auto& c : doc.at("columns")) {
            ColumnSpec spec;
            spec.name = c.at("name").get<std::string>();
            const auto kind = c.at("kind").get<std::string>();
            if (kind == "numeric") {
                spec.kind = ColumnKind::numeric;
            } else if (kind == "categorical") {
                spec.kind = ColumnKind::categorical;
            } else {
                throw std::invalid_argument("schema: column '" + spec.name + "' has unknown kind '" +
                                            kind + "'");
            }
            spec.group_key = c.value("group_key", false);
            schema.columns.push_back(std::move(spec));
        }
        schema.label_column = doc.at("label_column").get<std::string>();
        schema.id_column = doc.at("id_column").get<std::string>();
        if (doc.contains("missing_tokens")) {
            schema.missing_tokens = doc.at("missing_tokens").get<std::vector<std::string>>();
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("schema: ") + e.what());
    }
    schema.validate();
    return schema;
}

std::string schema_to_json(const FeatureSchema& schema) {
    json doc;
    doc["columns"] = json::array();
    for (const auto& c : schema.columns) {
        doc["columns"].push_back({{"name", c.name},
                                  {"kind", c.kind == ColumnKind::numeric ? "numeric" : "categorical"},
                                  {"group_key", c.group_key}});
    }
    doc["label_column"] = schema.label_column;
    doc["id_column"] = schema.id_column;
    doc["missing_tokens"] = schema.missing_tokens;
    return doc.dump(2) + "\n";
}

FeatureSchema load_schema(const std::filesystem::path& path) {
    return parse_schema_json(io::read_file(path));
}

void save_schema(const std::filesystem::path& path, const FeatureSchema& schema) {
    io::write_file_atomic(path, schema_to_json(schema));
}

// ---------------------------------------------------------------------------
// DataTable

DataTable::DataTable(FeatureSchema schema) : schema_(std::move(schema)) { schema_.validate(); }

void DataTable::add(Record record) {
    if (record.values.size() != schema_.columns.size()) {
        throw std::invalid_argument("record '" + record.id + "' has " +
                                    std::to_string(record.values.size()) + " values, schema has " +
                                    std::to_string(schema_.columns.size()));
    }
    for (std::size_t c = 0; c < record.values.size(); ++c) {
        const auto& cell = record.values[c];
        if (is_missing(cell)) continue;
        const bool numeric = std::holds_alternative<double>(cell);
        if (numeric != (schema_.columns[c].kind == ColumnKind::numeric)) {
            throw std::invalid_argument("record '" + record.id + "': column '" +
                                        schema_.columns[c].name + "' has the wrong cell kind");
        }
        if (numeric && !std::isfinite(std::get<double>(cell))) {
            throw std::invalid_argument("record '" + record.id + "': column '" +
                                        schema_.columns[c].name + "' is not finite");
        }
    }
    if (record.id.empty()) throw std::invalid_argument("record with empty id");
    if (!index_.emplace(record.id, rows_.size()).second) {
        throw std::invalid_argument("duplicate id '" + record.id + "'");
    }
    rows_.push_back(std::move(record));
}

std::optional<std::size_t> DataTable::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> DataTable::ids() const {
    std::vector<std::string> out;
    out.reserve(rows_.size());
    for (const auto& r : rows_) out.push_back(r.id);
    return out;
}

std::size_t DataTable::missing_count() const {
    std::size_t n = 0;
    for (const auto& r : rows_) {
        n += static_cast<std::size_t>(std::count_if(r.values.begin(), r.values.end(),
                                                    [](const Cell& c) { return is_missing(c); }));
    }
    return n;
}

DataTable DataTable::subset(std::span<const std::size_t> indices) const {
    DataTable out(schema_);
    out.rows_.reserve(indices.size());
    for (auto i : indices) out.add(rows_.at(i));
    return out;
}

// ---------------------------------------------------------------------------
// CSV

DataTable parse_csv_table(std::string_view text, const FeatureSchema& schema) {
    auto rows = io::parse_csv(text);
    if (rows.empty()) throw std::runtime_error("csv: header row missing");
    const auto& header = rows.front();

    auto locate = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw std::runtime_error("csv: required column '" + name + "' not in header");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t id_pos = locate(schema.id_column);
    const std::size_t label_pos = locate(schema.label_column);
    std::vector<std::size_t> positions;
    for (const auto& c : schema.columns) positions.push_back(locate(c.name));

    DataTable table(schema);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() == 1 && row[0].empty()) continue;
        const std::string where = "csv row " + std::to_string(r);
        if (row.size() != header.size()) {
            throw std::runtime_error(where + ": expected " + std::to_string(header.size()) +
                                     " fields, found " + std::to_string(row.size()));
        }
        Record rec;
        rec.id = std::string(trim(row[id_pos]));
        if (rec.id.empty()) throw std::runtime_error(where + ": empty id");
        if (table.find(rec.id)) throw std::runtime_error(where + ": duplicate id '" + rec.id + "'");
        const auto& label_text = row[label_pos];
        if (!schema.is_missing_token(label_text)) {
            try {
                rec.label = parse_ber(label_text);
            } catch (const std::invalid_argument& e) {
                throw std::runtime_error(where + ": " + e.what());
            }
        }
        rec.values.reserve(schema.columns.size());
        for (std::size_t c = 0; c < schema.columns.size(); ++c) {
            const auto& text_cell = row[positions[c]];
            if (schema.is_missing_token(text_cell)) {
                rec.values.emplace_back(std::monostate{});
            } else if (schema.columns[c].kind == ColumnKind::numeric) {
                auto v = io::parse_double(text_cell);
                if (!v || !std::isfinite(*v)) {
                    throw std::runtime_error(where + ": column '" + schema.columns[c].name +
                                             "' value '" + text_cell + "' is not a number");
                }
                rec.values.emplace_back(*v);
            } else {
                rec.values.emplace_back(std::string(trim(text_cell)));
            }
        }
        table.add(std::move(rec));
    }
    return table;
}

DataTable load_csv(const std::filesystem::path& path, const FeatureSchema& schema) {
    try {
        return parse_csv_table(io::read_file(path), schema);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

std::string table_to_csv(const DataTable& table) {
    const auto& schema = table.schema();
    io::CsvRow header{schema.id_column};
    for (const auto& c : schema.columns) header.push_back(c.name);
    header.push_back(schema.label_column);
    std::string out = io::csv_line(header);
    io::CsvRow line;
    for (const auto& r : table.rows()) {
        line.clear();
        line.push_back(r.id);
        for (const auto& cell : r.values) {
            if (auto d = std::get_if<double>(&cell)) {
                line.push_back(io::format_double(*d));
            } else if (auto s = std::get_if<std::string>(&cell)) {
                line.push_back(*s);
            } else {
                line.emplace_back();
            }
        }
        line.push_back(r.label ? format_ber(*r.label) : std::string());
        out += io::csv_line(line);
    }
    return out;
}

void write_csv(const std::filesystem::path& path, const DataTable& table) {
    io::write_file_atomic(path, table_to_csv(table));
}

std::vector<int> label_ordinals(const DataTable& table) {
    std::vector<int> out;
    out.reserve(table.size());
    for (const auto& r : table.rows()) {
        if (!r.label) throw std::invalid_argument("row '" + r.id + "' has no label");
        out.push_back(r.label->ordinal());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splitting

void SplitSpec::validate() const {
    for (double f : {train_frac, val_frac, test_frac}) {
        if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument("split fractions must lie in (0, 1)");
    }
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
        throw std::invalid_argument("split fractions must sum to 1");
    }
}

SplitSizes split_sizes(std::size_t n, const SplitSpec& spec) {
    spec.validate();
    const auto share = [n](double frac) {
        return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 0.5));
    };
    SplitSizes s;
    s.val = share(spec.val_frac);
    s.test = share(spec.test_frac);
    if (s.val + s.test > n) throw std::invalid_argument("split: validation and test exceed n");
    s.train = n - s.val - s.test;
    return s;
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
    if (n < 3) throw std::invalid_argument("split: need at least 3 rows, got " + std::to_string(n));
    const auto sizes = split_sizes(n, spec);
    if (sizes.train == 0 || sizes.val == 0 || sizes.test == 0) {
        throw std::invalid_argument("split: a partition would be empty (train " +
                                    std::to_string(sizes.train) + ", val " + std::to_string(sizes.val) +
                                    ", test " + std::to_string(sizes.test) + ")");
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(spec.seed);
    rng.shuffle(std::span<std::size_t>(perm));

    SplitIndices out;
    const auto first = perm.begin();
    out.train.assign(first, first + static_cast<std::ptrdiff_t>(sizes.train));
    out.val.assign(first + static_cast<std::ptrdiff_t>(sizes.train),
                   first + static_cast<std::ptrdiff_t>(sizes.train + sizes.val));
    out.test.assign(first + static_cast<std::ptrdiff_t>(sizes.train + sizes.val), perm.end());
    return out;
}

TableSplit split(const DataTable& table, const SplitSpec& spec) {
    const auto idx = split_indices(table.size(), spec);
    return {table.subset(idx.train), table.subset(idx.val), table.subset(idx.test)};
}

}  // namespace clear::tabular
