/* Dense row-major matrix of doubles, sized for small networks. */
#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "epiflow/errors.hpp"

namespace epiflow {

class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        Matrix m(rows.size(), rows.size() == 0 ? 0 : rows.begin()->size());
        std::size_t i = 0;
        for (const auto& row : rows) {
            if (row.size() != m.cols())
                throw ScenarioError("matrix rows have unequal lengths");
            std::size_t j = 0;
            for (double v : row) m(i, j++) = v;
            ++i;
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double row_sum(std::size_t i) const {
        double total = 0.0;
        for (std::size_t j = 0; j < cols_; ++j) total += (*this)(i, j);
        return total;
    }

    double col_sum(std::size_t j) const {
        double total = 0.0;
        for (std::size_t i = 0; i < rows_; ++i) total += (*this)(i, j);
        return total;
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

} // namespace epiflow
