#include "clear/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "clear/io.hpp"

namespace clear::preprocess {

using nlohmann::ordered_json;
using tabular::Cell;
using tabular::ColumnKind;
using tabular::DataTable;

namespace {

/// Most frequent token; ties go to the lexicographically smallest token.
std::string mode_of(const std::map<std::string, std::size_t>& counts) {
    std::string best;
    std::size_t best_count = 0;
    for (const auto& [token, count] : counts) {
        if (count > best_count) {
            best = token;
            best_count = count;
        }
    }
    return best;
}

/// Group token for each row; empty when the group cell is missing.
std::vector<std::string> row_groups(const DataTable& table, std::size_t group_col) {
    std::vector<std::string> groups;
    groups.reserve(table.size());
    for (const auto& r : table.rows()) {
        const auto* s = std::get_if<std::string>(&r.values[group_col]);
        groups.push_back(s ? *s : std::string());
    }
    return groups;
}

void require_schema(const PreprocessorState& state, const DataTable& table) {
    if (table.schema().hash() != state.schema_hash) {
        throw std::invalid_argument(
            "preprocess: table schema does not match the schema the state was fitted on");
    }
}

}  // namespace

std::vector<std::string> PreprocessorState::encoded_names() const {
    std::vector<std::string> names;
    for (const auto& n : numeric) names.push_back(n.name);
    for (const auto& c : categorical) {
        for (const auto& token : c.vocabulary) names.push_back(c.name + "=" + token);
    }
    return names;
}

std::vector<std::string> PreprocessorState::encoded_parents() const {
    std::vector<std::string> names;
    for (const auto& n : numeric) names.push_back(n.name);
    for (const auto& c : categorical) names.insert(names.end(), c.vocabulary.size(), c.name);
    return names;
}

std::size_t PreprocessorState::encoded_width() const {
    std::size_t w = numeric.size();
    for (const auto& c : categorical) w += c.vocabulary.size();
    return w;
}

const NumericStats* PreprocessorState::find_numeric(std::string_view name) const {
    for (const auto& n : numeric) {
        if (n.name == name) return &n;
    }
    return nullptr;
}

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("quantile of empty data");
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

PreprocessorState fit(const DataTable& train, double iqr_multiplier) {
    const auto& schema = train.schema();
    if (train.empty()) throw std::invalid_argument("preprocess: cannot fit on an empty table");
    if (!(iqr_multiplier >= 0.0)) throw std::invalid_argument("preprocess: IQR multiplier must be >= 0");
    const auto group_col = schema.group_key_index();
    if (!group_col) throw std::invalid_argument("preprocess: schema has no group_key column");

    PreprocessorState state;
    state.schema_hash = schema.hash();
    state.group_column = schema.columns[*group_col].name;
    state.iqr_multiplier = iqr_multiplier;
    state.fitted_on = train.size();

    const auto groups = row_groups(train, *group_col);
    const std::size_t n = train.size();

    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        const auto& spec = schema.columns[c];
        if (spec.kind == ColumnKind::numeric) {
            NumericStats st;
            st.name = spec.name;
            std::vector<double> present;
            for (const auto& r : train.rows()) {
                if (auto d = std::get_if<double>(&r.values[c])) present.push_back(*d);
            }
            if (present.empty()) {
                throw std::invalid_argument("preprocess: numeric column '" + spec.name +
                                            "' is entirely missing");
            }
            std::sort(present.begin(), present.end());
            st.q1 = quantile_sorted(present, 0.25);
            st.q3 = quantile_sorted(present, 0.75);
            const double iqr = st.q3 - st.q1;
            st.lower_fence = st.q1 - iqr_multiplier * iqr;
            st.upper_fence = st.q3 + iqr_multiplier * iqr;

            double total = 0.0;
            std::size_t count = 0;
            std::map<std::string, std::pair<double, std::size_t>> group_acc;
            for (std::size_t i = 0; i < n; ++i) {
                const auto* d = std::get_if<double>(&train.row(i).values[c]);
                if (!d) continue;
                const double v = std::clamp(*d, st.lower_fence, st.upper_fence);
                total += v;
                ++count;
                if (!groups[i].empty()) {
                    auto& acc = group_acc[groups[i]];
                    acc.first += v;
                    ++acc.second;
                }
            }
            st.global_mean = total / static_cast<double>(count);
            for (const auto& [g, acc] : group_acc) {
                st.group_means[g] = acc.first / static_cast<double>(acc.second);
            }

            std::vector<double> imputed(n);
            for (std::size_t i = 0; i < n; ++i) {
                const auto* d = std::get_if<double>(&train.row(i).values[c]);
                if (d) {
                    imputed[i] = std::clamp(*d, st.lower_fence, st.upper_fence);
                } else {
                    auto it = st.group_means.find(groups[i]);
                    imputed[i] = it != st.group_means.end() ? it->second : st.global_mean;
                }
            }
            double sum = 0.0;
            for (double v : imputed) sum += v;
            st.mean = sum / static_cast<double>(n);
            double ss = 0.0;
            for (double v : imputed) ss += (v - st.mean) * (v - st.mean);
            const auto [mn, mx] = std::minmax_element(imputed.begin(), imputed.end());
            if (*mn == *mx) {
                st.constant = true;
                st.stddev = 1.0;
            } else {
                st.stddev = std::sqrt(ss / static_cast<double>(n));
            }
            state.numeric.push_back(std::move(st));
        } else {
            CategoricalStats st;
            st.name = spec.name;
            std::map<std::string, std::size_t> counts;
            std::map<std::string, std::map<std::string, std::size_t>> group_counts;
            for (std::size_t i = 0; i < n; ++i) {
                const auto* s = std::get_if<std::string>(&train.row(i).values[c]);
                if (!s) continue;
                ++counts[*s];
                if (!groups[i].empty()) ++group_counts[groups[i]][*s];
            }
            if (counts.empty()) {
                throw std::invalid_argument("preprocess: categorical column '" + spec.name +
                                            "' is entirely missing");
            }
            for (const auto& [token, _] : counts) st.vocabulary.push_back(token);
            st.global_mode = mode_of(counts);
            for (const auto& [g, gc] : group_counts) st.group_modes[g] = mode_of(gc);
            state.categorical.push_back(std::move(st));
        }
    }
    return state;
}

Matrix clean_numeric(const PreprocessorState& state, const DataTable& table) {
    require_schema(state, table);
    const auto& schema = table.schema();
    const auto groups = row_groups(table, *schema.group_key_index());
    Matrix out(table.size(), state.numeric.size());
    std::size_t k = 0;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        if (schema.columns[c].kind != ColumnKind::numeric) continue;
        const auto& st = state.numeric[k];
        for (std::size_t i = 0; i < table.size(); ++i) {
            const auto* d = std::get_if<double>(&table.row(i).values[c]);
            if (d) {
                out(i, k) = std::clamp(*d, st.lower_fence, st.upper_fence);
            } else {
                auto it = st.group_means.find(groups[i]);
                out(i, k) = it != st.group_means.end() ? it->second : st.global_mean;
            }
        }
        ++k;
    }
    std::vector<std::string> names;
    for (const auto& st : state.numeric) names.push_back(st.name);
    out.set_col_names(std::move(names));
    return out;
}

Matrix transform(const PreprocessorState& state, const DataTable& table, TransformSummary* summary) {
    require_schema(state, table);
    const auto& schema = table.schema();
    const auto groups = row_groups(table, *schema.group_key_index());
    TransformSummary local;

    Matrix out(table.size(), state.encoded_width());
    std::size_t num_k = 0;
    std::size_t cat_k = 0;
    std::size_t offset = state.numeric.size();
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        if (schema.columns[c].kind == ColumnKind::numeric) {
            const auto& st = state.numeric[num_k];
            for (std::size_t i = 0; i < table.size(); ++i) {
                const auto* d = std::get_if<double>(&table.row(i).values[c]);
                double v;
                if (d) {
                    v = std::clamp(*d, st.lower_fence, st.upper_fence);
                    if (v != *d) ++local.clipped;
                } else {
                    auto it = st.group_means.find(groups[i]);
                    v = it != st.group_means.end() ? it->second : st.global_mean;
                    ++local.imputed_numeric;
                }
                out(i, num_k) = (v - st.mean) / st.stddev;
            }
            ++num_k;
        } else {
            const auto& st = state.categorical[cat_k];
            for (std::size_t i = 0; i < table.size(); ++i) {
                const auto* s = std::get_if<std::string>(&table.row(i).values[c]);
                std::string token;
                if (s) {
                    token = *s;
                } else {
                    auto it = st.group_modes.find(groups[i]);
                    token = it != st.group_modes.end() ? it->second : st.global_mode;
                    ++local.imputed_categorical;
                }
                auto pos = std::lower_bound(st.vocabulary.begin(), st.vocabulary.end(), token);
                if (pos != st.vocabulary.end() && *pos == token) {
                    out(i, offset + static_cast<std::size_t>(pos - st.vocabulary.begin())) = 1.0;
                } else {
                    ++local.unseen_categories;
                }
            }
            offset += st.vocabulary.size();
            ++cat_k;
        }
    }
    out.set_col_names(state.encoded_names());
    if (summary) *summary = local;
    return out;
}

// ---------------------------------------------------------------------------
// Persistence

std::string state_to_json(const PreprocessorState& state) {
    ordered_json doc;
    doc["version"] = kStateVersion;
    doc["schema_hash"] = state.schema_hash;
    doc["group_column"] = state.group_column;
    doc["iqr_multiplier"] = state.iqr_multiplier;
    doc["fitted_on"] = state.fitted_on;
    doc["numeric"] = ordered_json::object();
    for (const auto& st : state.numeric) {
        ordered_json group_means = ordered_json::object();
        for (const auto& [g, m] : st.group_means) group_means[g] = m;
        doc["numeric"][st.name] = {{"q1", st.q1},
                                   {"q3", st.q3},
                                   {"lower_fence", st.lower_fence},
                                   {"upper_fence", st.upper_fence},
                                   {"global_mean", st.global_mean},
                                   {"group_means", group_means},
                                   {"mean", st.mean},
                                   {"stddev", st.stddev},
                                   {"constant", st.constant}};
    }
    doc["categorical"] = ordered_json::object();
    for (const auto& st : state.categorical) {
        ordered_json group_modes = ordered_json::object();
        for (const auto& [g, m] : st.group_modes) group_modes[g] = m;
        doc["categorical"][st.name] = {{"vocabulary", st.vocabulary},
                                       {"global_mode", st.global_mode},
                                       {"group_modes", group_modes}};
    }
    return doc.dump(2) + "\n";
}

PreprocessorState state_from_json(std::string_view text) {
    PreprocessorState state;
    try {
        const auto doc = ordered_json::parse(text);
        if (!doc.contains("version")) throw std::invalid_argument("preprocessor state: missing 'version'");
        const int version = doc.at("version").get<int>();
        if (version != kStateVersion) {
            throw std::invalid_argument("preprocessor state: unsupported version " +
                                        std::to_string(version) + " (expected " +
                                        std::to_string(kStateVersion) + ")");
        }
        state.schema_hash = doc.at("schema_hash").get<std::uint64_t>();
        state.group_column = doc.at("group_column").get<std::string>();
        state.iqr_multiplier = doc.at("iqr_multiplier").get<double>();
        state.fitted_on = doc.at("fitted_on").get<std::size_t>();
        for (const auto& [name, v] : doc.at("numeric").items()) {
            NumericStats st;
            st.name = name;
            st.q1 = v.at("q1").get<double>();
            st.q3 = v.at("q3").get<double>();
            st.lower_fence = v.at("lower_fence").get<double>();
            st.upper_fence = v.at("upper_fence").get<double>();
            st.global_mean = v.at("global_mean").get<double>();
            for (const auto& [g, m] : v.at("group_means").items()) st.group_means[g] = m.get<double>();
            st.mean = v.at("mean").get<double>();
            st.stddev = v.at("stddev").get<double>();
            st.constant = v.at("constant").get<bool>();
            if (!(st.stddev > 0.0)) {
                throw std::invalid_argument("preprocessor state: column '" + name + "' has stddev <= 0");
            }
            state.numeric.push_back(std::move(st));
        }
        for (const auto& [name, v] : doc.at("categorical").items()) {
            CategoricalStats st;
            st.name = name;
            st.vocabulary = v.at("vocabulary").get<std::vector<std::string>>();
            st.global_mode = v.at("global_mode").get<std::string>();
            for (const auto& [g, m] : v.at("group_modes").items()) st.group_modes[g] = m.get<std::string>();
            if (st.vocabulary.empty()) {
                throw std::invalid_argument("preprocessor state: column '" + name + "' has no vocabulary");
            }
            state.categorical.push_back(std::move(st));
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("preprocessor state: ") + e.what());
    }
    return state;
}

void save_state(const std::filesystem::path& path, const PreprocessorState& state) {
    io::write_file_atomic(path, state_to_json(state));
}

PreprocessorState load_state(const std::filesystem::path& path) {
    return state_from_json(io::read_file(path));
}

PreprocessorState load_state(const std::filesystem::path& path, const tabular::FeatureSchema& schema) {
    auto state = load_state(path);
    if (state.schema_hash != schema.hash()) {
        throw std::invalid_argument(path.string() + ": state was fitted on a different schema");
    }
    return state;
}

}  // namespace clear::preprocess
