// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fairmib/errors.hpp"

namespace fairmib {

// Dense row-major matrix of doubles. The only tensor rank in this project is 2;
// vectors are n x 1 and scalars 1 x 1.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {
        if (r < 0 || c < 0) throw DimensionError("matrix dimensions must be non-negative");
    }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix ones(int r, int c) { return Matrix(r, c, 1.0); }

    static Matrix from_column(const std::vector<double>& v) {
        Matrix m(static_cast<int>(v.size()), 1);
        m.data = v;
        return m;
    }

    double& operator()(int i, int j) {
        return data[static_cast<size_t>(i) * cols + j];
    }
    double operator()(int i, int j) const {
        return data[static_cast<size_t>(i) * cols + j];
    }

    int64_t size() const { return static_cast<int64_t>(rows) * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, std::abs(v));
        return m;
    }

    std::string shape_str() const {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }
};

}  // namespace fairmib
