#include "clear/latent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "clear/io.hpp"

namespace clear::latent {

SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tolerance, int max_sweeps) {
    const std::size_t n = symmetric.rows();
    if (symmetric.cols() != n) throw std::invalid_argument("jacobi_eigen: matrix is not square");
    Matrix a = symmetric;
    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    double scale = 0.0;
    for (double x : a.values()) scale += x * x;
    const double threshold = tolerance * tolerance * std::max(scale, 1e-300);

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        }
        if (off <= threshold) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) > a(j, j); });
    SymmetricEigen out{std::vector<double>(n), Matrix(n, n)};
    for (std::size_t r = 0; r < n; ++r) {
        out.values[r] = a(order[r], order[r]);
        for (std::size_t k = 0; k < n; ++k) out.vectors(r, k) = v(k, order[r]);
    }
    return out;
}

PcaBasis pca_fit(const Matrix& vectors, std::size_t k) {
    const std::size_t n = vectors.rows();
    const std::size_t d = vectors.cols();
    if (n < 2) throw std::invalid_argument("pca_fit: need at least 2 rows");
    if (k == 0 || k > d) {
        throw std::invalid_argument("pca_fit: k must lie in 1.." + std::to_string(d));
    }
    PcaBasis basis;
    basis.mean.assign(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) basis.mean[c] += vectors(r, c);
    }
    for (auto& m : basis.mean) m /= static_cast<double>(n);

    Matrix cov(d, d);
    std::vector<double> centered(d);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) centered[c] = vectors(r, c) - basis.mean[c];
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = i; j < d; ++j) cov(i, j) += centered[i] * centered[j];
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            cov(i, j) /= static_cast<double>(n - 1);
            cov(j, i) = cov(i, j);
        }
    }

    const auto eig = jacobi_eigen(cov);
    double total = 0.0;
    for (std::size_t i = 0; i < d; ++i) total += cov(i, i);

    basis.components = Matrix(k, d);
    for (std::size_t r = 0; r < k; ++r) {
        auto src = eig.vectors.row(r);
        std::size_t arg = 0;
        for (std::size_t c = 1; c < d; ++c) {
            if (std::abs(src[c]) > std::abs(src[arg])) arg = c;
        }
        const double sign = src[arg] < 0.0 ? -1.0 : 1.0;
        for (std::size_t c = 0; c < d; ++c) basis.components(r, c) = sign * src[c];
        basis.eigenvalues.push_back(eig.values[r]);
        basis.explained_variance_ratio.push_back(total > 0.0 ? eig.values[r] / total : 0.0);
    }
    return basis;
}

Matrix pca_project(const PcaBasis& basis, const Matrix& vectors) {
    if (vectors.cols() != basis.dim()) {
        throw std::invalid_argument("pca_project: width " + std::to_string(vectors.cols()) +
                                    " does not match basis dimension " + std::to_string(basis.dim()));
    }
    Matrix out(vectors.rows(), basis.k());
    for (std::size_t r = 0; r < vectors.rows(); ++r) {
        for (std::size_t j = 0; j < basis.k(); ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < basis.dim(); ++c) {
                acc += (vectors(r, c) - basis.mean[c]) * basis.components(j, c);
            }
            out(r, j) = acc;
        }
    }
    std::vector<std::string> names;
    for (std::size_t j = 0; j < basis.k(); ++j) names.push_back("p" + std::to_string(j));
    out.set_col_names(std::move(names));
    return out;
}

std::string basis_to_json(const PcaBasis& basis) {
    nlohmann::ordered_json doc;
    doc["k"] = basis.k();
    doc["dim"] = basis.dim();
    doc["mean"] = basis.mean;
    doc["components"] = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < basis.k(); ++r) {
        auto row = basis.components.row(r);
        doc["components"].push_back(std::vector<double>(row.begin(), row.end()));
    }
    doc["eigenvalues"] = basis.eigenvalues;
    doc["explained_variance_ratio"] = basis.explained_variance_ratio;
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Store and search

EmbeddingStore::EmbeddingStore(std::vector<std::string> ids, Matrix vectors,
                               std::vector<std::optional<tabular::BerLevel>> labels)
    : ids_(std::move(ids)), vectors_(std::move(vectors)), labels_(std::move(labels)) {
    if (ids_.size() != vectors_.rows()) throw std::invalid_argument("EmbeddingStore: id count mismatch");
    if (labels_.empty()) labels_.resize(ids_.size());
    if (labels_.size() != ids_.size()) throw std::invalid_argument("EmbeddingStore: label count mismatch");
    if (!vectors_.all_finite()) throw std::invalid_argument("EmbeddingStore: non-finite vector");
    sorted_.resize(ids_.size());
    std::iota(sorted_.begin(), sorted_.end(), std::size_t{0});
    std::sort(sorted_.begin(), sorted_.end(), [&](auto a, auto b) { return ids_[a] < ids_[b]; });
    for (std::size_t i = 1; i < sorted_.size(); ++i) {
        if (ids_[sorted_[i]] == ids_[sorted_[i - 1]]) {
            throw std::invalid_argument("EmbeddingStore: duplicate id '" + ids_[sorted_[i]] + "'");
        }
    }
}

bool EmbeddingStore::has_labels() const {
    return std::any_of(labels_.begin(), labels_.end(), [](const auto& l) { return l.has_value(); });
}

std::optional<std::size_t> EmbeddingStore::find(std::string_view id) const {
    auto it = std::lower_bound(sorted_.begin(), sorted_.end(), id,
                               [&](std::size_t i, std::string_view key) { return ids_[i] < key; });
    if (it == sorted_.end() || ids_[*it] != id) return std::nullopt;
    return *it;
}

std::size_t EmbeddingStore::index_of(std::string_view id) const {
    auto i = find(id);
    if (!i) throw std::out_of_range("unknown id '" + std::string(id) + "'");
    return *i;
}

Metric parse_metric(std::string_view name) {
    if (name == "euclidean") return Metric::euclidean;
    if (name == "cosine") return Metric::cosine;
    throw std::invalid_argument("unknown metric '" + std::string(name) + "' (euclidean|cosine)");
}

double distance(std::span<const double> a, std::span<const double> b, Metric metric) {
    if (metric == Metric::euclidean) {
        double ss = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a[i] - b[i];
            ss += d * d;
        }
        return std::sqrt(ss);
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 1.0;
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<Neighbor> knn_index(const EmbeddingStore& store, std::size_t query, std::size_t k, Metric metric,
                                const std::function<bool(std::size_t)>& keep) {
    if (query >= store.size()) throw std::out_of_range("knn: query index out of range");
    const auto q = store.vectors().row(query);
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        if (i == query) continue;
        if (keep && !keep(i)) continue;
        cand.emplace_back(distance(q, store.vectors().row(i), metric), i);
    }
    const auto& ids = store.ids();
    auto less = [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return ids[a.second] < ids[b.second];
    };
    const std::size_t take = std::min(k, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(), less);
    std::vector<Neighbor> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back({cand[i].second, ids[cand[i].second], cand[i].first});
    return out;
}

std::vector<Neighbor> knn(const EmbeddingStore& store, std::string_view query_id, std::size_t k, Metric metric) {
    const std::size_t q = store.index_of(query_id);
    if (k == 0 || k >= store.size()) {
        throw std::invalid_argument("knn: k must lie in 1.." + std::to_string(store.size() - 1));
    }
    return knn_index(store, q, k, metric);
}

// ---------------------------------------------------------------------------
// Files

void write_embeddings_csv(const std::filesystem::path& path, const EmbeddingStore& store) {
    const bool labeled = store.has_labels();
    io::CsvRow header{"id"};
    for (std::size_t c = 0; c < store.dim(); ++c) header.push_back("e" + std::to_string(c));
    if (labeled) header.push_back("label");
    std::string out = io::csv_line(header);
    io::CsvRow line;
    for (std::size_t r = 0; r < store.size(); ++r) {
        line.clear();
        line.push_back(store.ids()[r]);
        for (double v : store.vectors().row(r)) line.push_back(io::format_double(v));
        if (labeled) line.push_back(store.label(r) ? tabular::format_ber(*store.label(r)) : std::string());
        out += io::csv_line(line);
    }
    io::write_file_atomic(path, out);
}

EmbeddingStore read_embeddings_csv(const std::filesystem::path& path) {
    auto rows = io::parse_csv(io::read_file(path));
    if (rows.empty()) throw std::runtime_error(path.string() + ": empty embeddings file");
    const auto& header = rows.front();
    if (header.empty() || header[0] != "id") throw std::runtime_error(path.string() + ": first column must be 'id'");
    const bool labeled = header.back() == "label";
    const std::size_t dim = header.size() - 1 - (labeled ? 1 : 0);
    if (dim == 0) throw std::runtime_error(path.string() + ": no embedding columns");
    std::vector<std::string> ids;
    std::vector<double> values;
    std::vector<std::optional<tabular::BerLevel>> labels;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() == 1 && row[0].empty()) continue;
        const std::string where = path.string() + ": row " + std::to_string(r);
        if (row.size() != header.size()) throw std::runtime_error(where + ": wrong field count");
        ids.push_back(row[0]);
        for (std::size_t c = 1; c <= dim; ++c) {
            auto v = io::parse_double(row[c]);
            if (!v) throw std::runtime_error(where + ": '" + row[c] + "' is not a number");
            values.push_back(*v);
        }
        if (labeled && !row.back().empty()) {
            labels.emplace_back(tabular::parse_ber(row.back()));
        } else {
            labels.emplace_back();
        }
    }
    const std::size_t n = ids.size();
    return EmbeddingStore(std::move(ids), Matrix(n, dim, std::move(values)), std::move(labels));
}

void write_projection_csv(const std::filesystem::path& path, const EmbeddingStore& store,
                          const Matrix& projection) {
    if (projection.rows() != store.size()) throw std::invalid_argument("write_projection_csv: row mismatch");
    io::CsvRow header{"id"};
    for (std::size_t c = 0; c < projection.cols(); ++c) header.push_back("p" + std::to_string(c));
    header.push_back("label");
    std::string out = io::csv_line(header);
    io::CsvRow line;
    for (std::size_t r = 0; r < store.size(); ++r) {
        line.clear();
        line.push_back(store.ids()[r]);
        for (double v : projection.row(r)) line.push_back(io::format_double(v));
        line.push_back(store.label(r) ? tabular::format_ber(*store.label(r)) : std::string());
        out += io::csv_line(line);
    }
    io::write_file_atomic(path, out);
}

}  // namespace clear::latent
