// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fairmib/matrix.hpp"

namespace fairmib {

// Compressed-sparse-row matrix. Column indices are sorted within each row and
// unique; this is relied on for deterministic kernels.
struct CsrMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<int> row_ptr;  // size rows + 1
    std::vector<int> col_idx;
    std::vector<double> values;

    int64_t nnz() const { return static_cast<int64_t>(col_idx.size()); }

    // Builds a binary matrix from an edge list (value 1.0 per stored entry).
    // Duplicates are collapsed to a single entry. Self loops are dropped when
    // requested; symmetrize stores both (u,v) and (v,u).
    static CsrMatrix from_edges(int n, const std::vector<std::pair<int, int>>& edges,
                                bool symmetrize, bool drop_self_loops);

    // out = this * dense. out is resized as needed.
    void multiply(const Matrix& dense, Matrix& out) const;
    Matrix multiply(const Matrix& dense) const;

    // grad_in += transpose(this) * grad_out, the adjoint of multiply.
    void multiply_transposed_accumulate(const Matrix& grad_out, Matrix& grad_in) const;

    Matrix to_dense() const;
    std::vector<double> row_sums() const;
};

}  // namespace fairmib
