#include "clear/matrix.hpp"

#include <cmath>
#include <stdexcept>

#include "clear/io.hpp"

namespace clear {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
        throw std::invalid_argument("Matrix: value count " + std::to_string(values_.size()) +
                                    " does not match " + std::to_string(rows_) + "x" +
                                    std::to_string(cols_));
    }
}

void Matrix::set_col_names(std::vector<std::string> names) {
    if (!names.empty() && names.size() != cols_) {
        throw std::invalid_argument("Matrix: column name count does not match column count");
    }
    col_names_ = std::move(names);
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) throw std::out_of_range("Matrix::select_rows: index out of range");
        auto src = row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    out.col_names_ = col_names_;
    return out;
}

bool Matrix::all_finite() const {
    for (double v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m,
                      std::span<const std::string> ids) {
    if (ids.size() != m.rows()) throw std::invalid_argument("write_matrix_csv: id count mismatch");
    io::CsvRow header{"id"};
    for (std::size_t c = 0; c < m.cols(); ++c) {
        header.push_back(m.col_names().empty() ? "x" + std::to_string(c) : m.col_names()[c]);
    }
    std::string out = io::csv_line(header);
    io::CsvRow line;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        line.clear();
        line.push_back(ids[r]);
        for (double v : m.row(r)) line.push_back(io::format_double(v));
        out += io::csv_line(line);
    }
    io::write_file_atomic(path, out);
}

IdMatrix read_matrix_csv(const std::filesystem::path& path) {
    auto rows = io::parse_csv(io::read_file(path));
    if (rows.empty()) throw std::runtime_error(path.string() + ": empty matrix file");
    const auto& header = rows.front();
    if (header.empty() || header[0] != "id") {
        throw std::runtime_error(path.string() + ": first column must be 'id'");
    }
    const std::size_t cols = header.size() - 1;
    IdMatrix result;
    std::vector<double> values;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() == 1 && row[0].empty()) continue;
        if (row.size() != header.size()) {
            throw std::runtime_error(path.string() + ": row " + std::to_string(r) +
                                     " has " + std::to_string(row.size()) + " fields, expected " +
                                     std::to_string(header.size()));
        }
        result.ids.push_back(row[0]);
        for (std::size_t c = 1; c < row.size(); ++c) {
            auto v = io::parse_double(row[c]);
            if (!v) throw std::runtime_error(path.string() + ": row " + std::to_string(r) +
                                             " column '" + header[c] + "' is not a number");
            values.push_back(*v);
        }
    }
    result.matrix = Matrix(result.ids.size(), cols, std::move(values));
    result.matrix.set_col_names({header.begin() + 1, header.end()});
    return result;
}

}  // namespace clear
