#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clear/matrix.hpp"
#include "clear/tabular.hpp"

namespace clear::latent {

struct SymmetricEigen {
    std::vector<double> values;  // descending
    Matrix vectors;              // row i is the eigenvector for values[i]
};

/// Cyclic Jacobi rotations on a symmetric matrix.
SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tolerance = 1e-14, int max_sweeps = 100);

struct PcaBasis {
    std::vector<double> mean;
    Matrix components;  // k x d, orthonormal rows
    std::vector<double> eigenvalues;
    std::vector<double> explained_variance_ratio;

    std::size_t k() const { return components.rows(); }
    std::size_t dim() const { return components.cols(); }
};

/// Centers, forms the sample covariance (N-1), keeps the top-k eigenpairs.
/// Each component's largest-magnitude entry is made positive.
PcaBasis pca_fit(const Matrix& vectors, std::size_t k);
Matrix pca_project(const PcaBasis& basis, const Matrix& vectors);

std::string basis_to_json(const PcaBasis& basis);

/// Id-indexed latent vectors with optional BER labels.
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    EmbeddingStore(std::vector<std::string> ids, Matrix vectors,
                   std::vector<std::optional<tabular::BerLevel>> labels = {});

    std::size_t size() const { return ids_.size(); }
    std::size_t dim() const { return vectors_.cols(); }
    const std::vector<std::string>& ids() const { return ids_; }
    const Matrix& vectors() const { return vectors_; }
    const std::vector<std::optional<tabular::BerLevel>>& labels() const { return labels_; }
    const std::optional<tabular::BerLevel>& label(std::size_t i) const { return labels_[i]; }
    bool has_labels() const;

    std::optional<std::size_t> find(std::string_view id) const;
    /// Throws std::out_of_range naming the id.
    std::size_t index_of(std::string_view id) const;

private:
    std::vector<std::string> ids_;
    Matrix vectors_;
    std::vector<std::optional<tabular::BerLevel>> labels_;
    std::vector<std::size_t> sorted_;  // indices ordered by id
};

enum class Metric { euclidean, cosine };
Metric parse_metric(std::string_view name);

double distance(std::span<const double> a, std::span<const double> b, Metric metric);

struct Neighbor {
    std::size_t index = 0;
    std::string id;
    double distance = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Exact search over every row except the query; ascending distance, ties by id.
std::vector<Neighbor> knn(const EmbeddingStore& store, std::string_view query_id, std::size_t k = 10,
                          Metric metric = Metric::euclidean);

/// Same, by row index, restricted to candidates accepted by `keep` (when given).
/// Returns fewer than k neighbors when fewer candidates exist.
std::vector<Neighbor> knn_index(const EmbeddingStore& store, std::size_t query, std::size_t k, Metric metric,
                                const std::function<bool(std::size_t)>& keep = {});

/// `id,e0..e{d-1}[,label]`
void write_embeddings_csv(const std::filesystem::path& path, const EmbeddingStore& store);
EmbeddingStore read_embeddings_csv(const std::filesystem::path& path);

/// `id,p0,p1[,p2],label`
void write_projection_csv(const std::filesystem::path& path, const EmbeddingStore& store,
                          const Matrix& projection);

}  // namespace clear::latent
