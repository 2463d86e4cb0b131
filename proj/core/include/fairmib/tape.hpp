// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fairmib/csr.hpp"
#include "fairmib/errors.hpp"
#include "fairmib/matrix.hpp"

namespace fairmib {

using TensorId = int;

// One recorded tensor on the tape: its forward value, optional gradient
// buffer, and the adjoint callback that scatters the output gradient back to
// the operation's inputs.
struct TapeNode {
    Matrix value;
    Matrix grad;  // allocated lazily during backward
    bool requires_grad = false;
    const char* op = "leaf";
    std::function<void()> backward_fn;  // empty for leaves
};

// Reverse-mode differentiation over a fixed operator set. Every operation
// appends a node; backward() walks the record once in reverse execution order,
// accumulating gradients additively into every requires-grad tensor.
//
// A tape is confined to a single logical thread. Sparse operands passed to
// spmm are borrowed and must outlive the tape.
//
// All forward outputs are checked for NaN/Inf; a non-finite result raises
// NumericError naming the operation.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    TensorId leaf(Matrix value, bool requires_grad = false);

    TensorId matmul(TensorId a, TensorId b);
    TensorId spmm(const CsrMatrix& sparse, TensorId dense);
    TensorId add(TensorId a, TensorId b);
    // a (r x c) plus a row vector (1 x c) added to every row.
    TensorId add_rowvec(TensorId a, TensorId v);
    TensorId add_scalar(TensorId a, double s);
    TensorId scale(TensorId a, double s);
    TensorId relu(TensorId a);
    TensorId tanh(TensorId a);
    TensorId exp(TensorId a);
    TensorId log(TensorId a);
    TensorId sigmoid(TensorId a);
    TensorId softplus(TensorId a);
    TensorId elementwise_mul(TensorId a, TensorId b);
    TensorId concat_cols(TensorId a, TensorId b);
    TensorId clamp(TensorId a, double lo, double hi);

    // out[i][j] = <a_i, b_j> / (|a_i| * |b_j|), norms floored at 1e-12.
    TensorId row_cosine_sim_matrix(TensorId a, TensorId b);

    TensorId reduce_mean(TensorId a);  // 1x1, mean over all entries
    TensorId reduce_sum(TensorId a);   // 1x1
    TensorId softmax_rows(TensorId a);
    TensorId logsumexp_rows(TensorId a);  // r x 1
    TensorId take_diag(TensorId a);       // square input -> r x 1

    // mu + exp(0.5 * logvar) (.) eps. Gradients flow to mu and logvar only;
    // the noise is a constant.
    TensorId reparameterize(TensorId mu, TensorId logvar, const Matrix& eps);

    // Seeds d(loss)/d(loss) = 1 and propagates through the whole record.
    // loss must be 1x1 and requires-grad. Running backward twice without
    // reset() is a StateError.
    void backward(TensorId loss);

    // Clears the record so the tape can be reused for a fresh forward pass.
    void reset();

    const Matrix& value(TensorId id) const { return node(id).value; }
    // Gradient of the last backward() target w.r.t. tensor `id`. Zero-shaped
    // if the tensor never received a gradient.
    const Matrix& grad(TensorId id) const { return node(id).grad; }
    bool requires_grad(TensorId id) const { return node(id).requires_grad; }
    int size() const { return static_cast<int>(nodes_.size()); }

  private:
    std::vector<TapeNode> nodes_;
    bool backward_done_ = false;

    const TapeNode& node(TensorId id) const;
    TapeNode& node(TensorId id);
    TensorId push(Matrix value, bool requires_grad, const char* op);
    Matrix& grad_buf(TensorId id);
    void check_shapes_equal(TensorId a, TensorId b, const char* op) const;

    TensorId unary_map(TensorId a, const char* op, double (*fwd)(double),
                       double (*dfd)(double, double));
};

}  // namespace fairmib
