#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace clear {

/// Dense row-major matrix of doubles with optional column names.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return values_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    const std::vector<std::string>& col_names() const { return col_names_; }
    void set_col_names(std::vector<std::string> names);

    /// Rows selected by index, in the given order; names carried over.
    Matrix select_rows(std::span<const std::size_t> indices) const;

    bool all_finite() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
    std::vector<std::string> col_names_;
};

/// CSV with a header row `id,<col names>`; one line per row.
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m,
                      std::span<const std::string> ids);

struct IdMatrix {
    std::vector<std::string> ids;
    Matrix matrix;
};

IdMatrix read_matrix_csv(const std::filesystem::path& path);

}  // namespace clear
