// SPDX-License-Identifier: Apache-2.0
#include "fairmib/csr.hpp"

#include <algorithm>

#include "fairmib/errors.hpp"

namespace fairmib {

CsrMatrix CsrMatrix::from_edges(int n, const std::vector<std::pair<int, int>>& edges,
                                bool symmetrize, bool drop_self_loops) {
    std::vector<std::pair<int, int>> entries;
    entries.reserve(edges.size() * (symmetrize ? 2 : 1));
    for (const auto& [u, v] : edges) {
        if (u < 0 || u >= n || v < 0 || v >= n)
            throw ValidationError("edge endpoint out of range: (" + std::to_string(u) + "," +
                                  std::to_string(v) + ") with n=" + std::to_string(n));
        if (drop_self_loops && u == v) continue;
        entries.emplace_back(u, v);
        if (symmetrize && u != v) entries.emplace_back(v, u);
    }
    std::sort(entries.begin(), entries.end());
    entries.erase(std::unique(entries.begin(), entries.end()), entries.end());

    CsrMatrix m;
    m.rows = n;
    m.cols = n;
    m.row_ptr.assign(static_cast<size_t>(n) + 1, 0);
    m.col_idx.reserve(entries.size());
    m.values.assign(entries.size(), 1.0);
    for (const auto& [u, v] : entries) {
        m.row_ptr[static_cast<size_t>(u) + 1]++;
        m.col_idx.push_back(v);
    }
    for (int i = 0; i < n; ++i) m.row_ptr[i + 1] += m.row_ptr[i];
    return m;
}

void CsrMatrix::multiply(const Matrix& dense, Matrix& out) const {
    if (cols != dense.rows)
        throw DimensionError("spmm shape mismatch: " + std::to_string(rows) + "x" +
                             std::to_string(cols) + " vs " + dense.shape_str());
    if (out.rows != rows || out.cols != dense.cols) out = Matrix(rows, dense.cols);
    const int c = dense.cols;
    for (int i = 0; i < rows; ++i) {
        double* out_row = &out.data[static_cast<size_t>(i) * c];
        std::fill(out_row, out_row + c, 0.0);
        for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
            const double v = values[k];
            const double* in_row = &dense.data[static_cast<size_t>(col_idx[k]) * c];
            for (int j = 0; j < c; ++j) out_row[j] += v * in_row[j];
        }
    }
}

Matrix CsrMatrix::multiply(const Matrix& dense) const {
    Matrix out;
    multiply(dense, out);
    return out;
}

void CsrMatrix::multiply_transposed_accumulate(const Matrix& grad_out, Matrix& grad_in) const {
    if (grad_out.rows != rows || grad_in.rows != cols || grad_out.cols != grad_in.cols)
        throw DimensionError("spmm adjoint shape mismatch: " + grad_out.shape_str() + " vs " +
                             grad_in.shape_str());
    const int c = grad_out.cols;
    for (int i = 0; i < rows; ++i) {
        const double* g_row = &grad_out.data[static_cast<size_t>(i) * c];
        for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
            const double v = values[k];
            double* acc_row = &grad_in.data[static_cast<size_t>(col_idx[k]) * c];
            for (int j = 0; j < c; ++j) acc_row[j] += v * g_row[j];
        }
    }
}

Matrix CsrMatrix::to_dense() const {
    Matrix d(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) d(i, col_idx[k]) = values[k];
    return d;
}

std::vector<double> CsrMatrix::row_sums() const {
    std::vector<double> s(rows, 0.0);
    for (int i = 0; i < rows; ++i)
        for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s[i] += values[k];
    return s;
}

}  // namespace fairmib
