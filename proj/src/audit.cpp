#include "clear/audit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include <json.hpp>

#include "clear/io.hpp"

namespace clear::audit {

using tabular::BerLevel;

void AuditConfig::validate() const {
    if (k < 1) throw std::invalid_argument("audit: k must be >= 1");
    if (spread_threshold < 1) throw std::invalid_argument("audit: spread threshold must be >= 1");
    if (radius && !(*radius >= 0.0)) throw std::invalid_argument("audit: radius must be >= 0");
}

double AuditReport::flag_rate() const {
    return findings.empty() ? 0.0 : static_cast<double>(n_flagged) / static_cast<double>(findings.size());
}

int rating_spread(BerLevel ref, std::span<const AuditNeighbor> neighbors) {
    int spread = 0;
    for (const auto& n : neighbors) spread = std::max(spread, std::abs(ref.ordinal() - n.level.ordinal()));
    return spread;
}

namespace {

AuditFinding audit_index(const latent::EmbeddingStore& store, std::size_t ref, const AuditConfig& config) {
    const auto& labels = store.labels();
    if (!labels[ref]) throw std::invalid_argument("audit: reference '" + store.ids()[ref] + "' has no label");
    AuditFinding f;
    f.ref_id = store.ids()[ref];
    f.ref_level = *labels[ref];
    const auto neighbors =
        latent::knn_index(store, ref, config.k, config.metric, [&](std::size_t i) { return labels[i].has_value(); });
    for (const auto& n : neighbors) {
        if (config.radius && n.distance > *config.radius) break;
        f.neighbors.push_back({n.id, *labels[n.index], n.distance});
    }
    f.spread = rating_spread(f.ref_level, f.neighbors);
    f.flagged = f.spread >= config.spread_threshold;
    return f;
}

}  // namespace

AuditFinding audit_one(const latent::EmbeddingStore& store, std::string_view ref_id, const AuditConfig& config) {
    config.validate();
    return audit_index(store, store.index_of(ref_id), config);
}

AuditReport audit_all(const latent::EmbeddingStore& store, const AuditConfig& config) {
    config.validate();
    AuditReport report;
    report.config = config;
    std::vector<std::size_t> order(store.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return store.ids()[a] < store.ids()[b]; });
    for (auto i : order) {
        if (!store.label(i)) {
            ++report.n_skipped_unlabeled;
            continue;
        }
        auto f = audit_index(store, i, config);
        report.n_flagged += f.flagged ? 1 : 0;
        ++report.spread_histogram[static_cast<std::size_t>(f.spread)];
        report.findings.push_back(std::move(f));
    }
    return report;
}

std::string report_to_csv(const AuditReport& report) {
    std::string out = "ref_id,ref_level,spread,flagged,neighbor_ids,neighbor_levels,neighbor_distances\n";
    for (const auto& f : report.findings) {
        std::string ids, levels, dists;
        for (std::size_t i = 0; i < f.neighbors.size(); ++i) {
            if (i) {
                ids += ';';
                levels += ';';
                dists += ';';
            }
            ids += f.neighbors[i].id;
            levels += f.neighbors[i].level.fine();
            dists += io::format_double(f.neighbors[i].distance);
        }
        out += io::csv_line({f.ref_id, tabular::format_ber(f.ref_level), std::to_string(f.spread),
                             f.flagged ? "1" : "0", ids, levels, dists});
    }
    return out;
}

std::string summary_to_json(const AuditReport& report) {
    nlohmann::ordered_json doc;
    doc["k"] = report.config.k;
    doc["spread_threshold"] = report.config.spread_threshold;
    doc["radius"] = report.config.radius ? nlohmann::ordered_json(*report.config.radius) : nlohmann::ordered_json();
    doc["metric"] = report.config.metric == latent::Metric::euclidean ? "euclidean" : "cosine";
    doc["n_findings"] = report.findings.size();
    doc["n_flagged"] = report.n_flagged;
    doc["flag_rate"] = report.flag_rate();
    doc["n_skipped_unlabeled"] = report.n_skipped_unlabeled;
    doc["spread_histogram"] = report.spread_histogram;
    return doc.dump(2) + "\n";
}

void write_report_csv(const std::filesystem::path& path, const AuditReport& report) {
    io::write_file_atomic(path, report_to_csv(report));
}

void write_summary_json(const std::filesystem::path& path, const AuditReport& report) {
    io::write_file_atomic(path, summary_to_json(report));
}

// ---------------------------------------------------------------------------
// Feature tables

FenceMap fences_from_state(const preprocess::PreprocessorState& state) {
    FenceMap out;
    for (const auto& n : state.numeric) out[n.name] = {n.lower_fence, n.upper_fence};
    return out;
}

namespace {

std::vector<double> numeric_column(const tabular::DataTable& table, std::size_t col) {
    std::vector<double> values;
    for (const auto& r : table.rows()) {
        if (auto d = std::get_if<double>(&r.values[col])) values.push_back(*d);
    }
    std::sort(values.begin(), values.end());
    return values;
}

std::string cell_text(const tabular::Cell& cell) {
    if (auto d = std::get_if<double>(&cell)) return io::format_double(*d);
    if (auto s = std::get_if<std::string>(&cell)) return *s;
    return {};
}

}  // namespace

FenceMap fences_from_table(const tabular::DataTable& table, double iqr_multiplier) {
    FenceMap out;
    const auto& cols = table.schema().columns;
    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (cols[c].kind != tabular::ColumnKind::numeric) continue;
        const auto values = numeric_column(table, c);
        if (values.empty()) continue;
        const double q1 = preprocess::quantile_sorted(values, 0.25);
        const double q3 = preprocess::quantile_sorted(values, 0.75);
        out[cols[c].name] = {q1 - iqr_multiplier * (q3 - q1), q3 + iqr_multiplier * (q3 - q1)};
    }
    return out;
}

FeatureTable feature_table(const tabular::DataTable& raw, const AuditFinding& finding,
                           std::span<const std::string> columns, const FenceMap& fences) {
    const auto& schema = raw.schema();
    FeatureTable table;
    std::vector<std::size_t> positions;
    if (columns.empty()) {
        for (std::size_t c = 0; c < schema.columns.size(); ++c) {
            table.columns.push_back(schema.columns[c].name);
            positions.push_back(c);
        }
    } else {
        for (const auto& name : columns) {
            auto pos = schema.index_of(name);
            if (!pos) throw std::invalid_argument("feature_table: unknown column '" + name + "'");
            table.columns.push_back(name);
            positions.push_back(*pos);
        }
    }

    auto add_row = [&](std::string role, const std::string& id, BerLevel level, double dist) {
        auto idx = raw.find(id);
        if (!idx) throw std::invalid_argument("feature_table: id '" + id + "' not in the raw table");
        const auto& rec = raw.row(*idx);
        FeatureTableRow row{std::move(role), id, tabular::format_ber(level), dist, {}, {}};
        for (std::size_t j = 0; j < positions.size(); ++j) {
            const auto& cell = rec.values[positions[j]];
            row.values.push_back(cell_text(cell));
            std::string mark;
            if (auto d = std::get_if<double>(&cell)) {
                auto f = fences.find(table.columns[j]);
                if (f != fences.end()) {
                    if (*d > f->second.upper) mark = "high";
                    else if (*d < f->second.lower) mark = "low";
                }
            }
            row.marks.push_back(std::move(mark));
        }
        table.rows.push_back(std::move(row));
    };

    add_row("reference", finding.ref_id, finding.ref_level, 0.0);
    for (const auto& n : finding.neighbors) add_row("neighbor", n.id, n.level, n.distance);

    for (std::size_t j = 0; j < positions.size(); ++j) {
        if (schema.columns[positions[j]].kind != tabular::ColumnKind::numeric) continue;
        const auto values = numeric_column(raw, positions[j]);
        BoxStats s;
        s.column = table.columns[j];
        s.count = values.size();
        if (!values.empty()) {
            s.min = values.front();
            s.q1 = preprocess::quantile_sorted(values, 0.25);
            s.median = preprocess::quantile_sorted(values, 0.5);
            s.q3 = preprocess::quantile_sorted(values, 0.75);
            s.max = values.back();
        }
        table.summary.push_back(s);
    }
    return table;
}

void write_feature_table_csv(const std::filesystem::path& path, const FeatureTable& table) {
    io::CsvRow header{"role", "id", "level", "distance"};
    for (const auto& c : table.columns) header.push_back(c);
    for (const auto& c : table.columns) header.push_back(c + "_flag");
    std::string out = io::csv_line(header);
    for (const auto& r : table.rows) {
        io::CsvRow line{r.role, r.id, r.level, io::format_double(r.distance)};
        line.insert(line.end(), r.values.begin(), r.values.end());
        line.insert(line.end(), r.marks.begin(), r.marks.end());
        out += io::csv_line(line);
    }
    io::write_file_atomic(path, out);
}

void write_boxplot_csv(const std::filesystem::path& path, std::span<const BoxStats> summary) {
    std::string out = "column,count,min,q1,median,q3,max\n";
    for (const auto& s : summary) {
        out += io::csv_line({s.column, std::to_string(s.count), io::format_double(s.min), io::format_double(s.q1),
                             io::format_double(s.median), io::format_double(s.q3), io::format_double(s.max)});
    }
    io::write_file_atomic(path, out);
}

}  // namespace clear::audit
