// SPDX-License-Identifier: Apache-2.0
#include "fairmib/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fairmib {

namespace {

constexpr double kNormFloor = 1e-12;

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

const TapeNode& Tape::node(TensorId id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
        throw StateError("invalid tensor id " + std::to_string(id));
    return nodes_[id];
}

TapeNode& Tape::node(TensorId id) {
    return const_cast<TapeNode&>(static_cast<const Tape*>(this)->node(id));
}

TensorId Tape::push(Matrix value, bool requires_grad, const char* op) {
    if (!value.all_finite())
        throw NumericError(std::string("non-finite output in op '") + op + "'");
    TapeNode n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = op;
    nodes_.push_back(std::move(n));
    return static_cast<TensorId>(nodes_.size()) - 1;
}

Matrix& Tape::grad_buf(TensorId id) {
    TapeNode& n = nodes_[id];
    if (n.grad.rows != n.value.rows || n.grad.cols != n.value.cols)
        n.grad = Matrix(n.value.rows, n.value.cols);
    return n.grad;
}

void Tape::check_shapes_equal(TensorId a, TensorId b, const char* op) const {
    if (!node(a).value.same_shape(node(b).value))
        throw DimensionError(std::string(op) + ": shapes " + node(a).value.shape_str() + " and " +
                             node(b).value.shape_str() + " differ");
}

TensorId Tape::leaf(Matrix value, bool requires_grad) {
    return push(std::move(value), requires_grad, "leaf");
}

TensorId Tape::matmul(TensorId a, TensorId b) {
    const Matrix& av = node(a).value;
    const Matrix& bv = node(b).value;
    if (av.cols != bv.rows)
        throw DimensionError("matmul: shapes " + av.shape_str() + " and " + bv.shape_str() +
                             " are incompatible");
    Matrix out(av.rows, bv.cols);
    for (int i = 0; i < av.rows; ++i) {
        for (int k = 0; k < av.cols; ++k) {
            const double aik = av(i, k);
            if (aik == 0.0) continue;
            const double* brow = &bv.data[static_cast<size_t>(k) * bv.cols];
            double* orow = &out.data[static_cast<size_t>(i) * out.cols];
            for (int j = 0; j < bv.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    bool rg = node(a).requires_grad || node(b).requires_grad;
    TensorId id = push(std::move(out), rg, "matmul");
    if (rg) {
        nodes_[id].backward_fn = [this, a, b, id]() {
            const Matrix& g = nodes_[id].grad;
            const Matrix& av2 = nodes_[a].value;
            const Matrix& bv2 = nodes_[b].value;
            if (nodes_[a].requires_grad) {
                Matrix& ga = grad_buf(a);
                // ga += g * b^T
                for (int i = 0; i < g.rows; ++i)
                    for (int k = 0; k < bv2.rows; ++k) {
                        double s = 0.0;
                        for (int j = 0; j < g.cols; ++j) s += g(i, j) * bv2(k, j);
                        ga(i, k) += s;
                    }
            }
            if (nodes_[b].requires_grad) {
                Matrix& gb = grad_buf(b);
                // gb += a^T * g
                for (int i = 0; i < av2.rows; ++i)
                    for (int k = 0; k < av2.cols; ++k) {
                        const double aik = av2(i, k);
                        if (aik == 0.0) continue;
                        for (int j = 0; j < g.cols; ++j) gb(k, j) += aik * g(i, j);
                    }
            }
        };
    }
    return id;
}

TensorId Tape::spmm(const CsrMatrix& sparse, TensorId dense) {
    const Matrix& dv = node(dense).value;
    Matrix out;
    sparse.multiply(dv, out);
    bool rg = node(dense).requires_grad;
    TensorId id = push(std::move(out), rg, "spmm");
    if (rg) {
        const CsrMatrix* sp = &sparse;
        nodes_[id].backward_fn = [this, sp, dense, id]() {
            sp->multiply_transposed_accumulate(nodes_[id].grad, grad_buf(dense));
        };
    }
    return id;
}

TensorId Tape::add(TensorId a, TensorId b) {
    check_shapes_equal(a, b, "add");
    const Matrix& av = node(a).value;
    const Matrix& bv = node(b).value;
    Matrix out(av.rows, av.cols);
    for (int64_t i = 0; i < out.size(); ++i) out.data[i] = av.data[i] + bv.data[i];
    bool rg = node(a).requires_grad || node(b).requires_grad;
    TensorId id = push(std::move(out), rg, "add");
    if (rg) {
        nodes_[id].backward_fn = [this, a, b, id]() {
            const Matrix& g = nodes_[id].grad;
            if (nodes_[a].requires_grad) {
                Matrix& ga = grad_buf(a);
                for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
            }
            if (nodes_[b].requires_grad) {
                Matrix& gb = grad_buf(b);
                for (int64_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i];
            }
        };
    }
    return id;
}

TensorId Tape::add_rowvec(TensorId a, TensorId v) {
    const Matrix& av = node(a).value;
    const Matrix& vv = node(v).value;
    if (vv.rows != 1 || vv.cols != av.cols)
        throw DimensionError("add_rowvec: shapes " + av.shape_str() + " and " + vv.shape_str() +
                             " are incompatible");
    Matrix out(av.rows, av.cols);
    for (int i = 0; i < av.rows; ++i)
        for (int j = 0; j < av.cols; ++j) out(i, j) = av(i, j) + vv(0, j);
    bool rg = node(a).requires_grad || node(v).requires_grad;
    TensorId id = push(std::move(out), rg, "add_rowvec");
    if (rg) {
        nodes_[id].backward_fn = [this, a, v, id]() {
            const Matrix& g = nodes_[id].grad;
            if (nodes_[a].requires_grad) {
                Matrix& ga = grad_buf(a);
                for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
            }
            if (nodes_[v].requires_grad) {
                Matrix& gv = grad_buf(v);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < g.cols; ++j) gv(0, j) += g(i, j);
            }
        };
    }
    return id;
}

TensorId Tape::add_scalar(TensorId a, double s) {
    const Matrix& av = node(a).value;
    Matrix out(av.rows, av.cols);
    for (int64_t i = 0; i < out.size(); ++i) out.data[i] = av.data[i] + s;
    bool rg = node(a).requires_grad;
    TensorId id = push(std::move(out), rg, "add_scalar");
    if (rg) {
        nodes_[id].backward_fn = [this, a, id]() {
            const Matrix& g = nodes_[id].grad;
            Matrix& ga = grad_buf(a);
            for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
        };
    }
    return id;
}

TensorId Tape::scale(TensorId a, double s) {
    const Matrix& av = node(a).value;
    Matrix out(av.rows, av.cols);
    for (int64_t i = 0; i < out.size(); ++i) out.data[i] = av.data[i] * s;
    bool rg = node(a).requires_grad;
    TensorId id = push(std::move(out), rg, "scale");
    if (rg) {
        nodes_[id].backward_fn = [this, a, id, s]() {
            const Matrix& g = nodes_[id].grad;
            Matrix& ga = grad_buf(a);
            for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += s * g.data[i];
        };
    }
    return id;
}

TensorId Tape::unary_map(TensorId a, const char* op, double (*fwd)(double),
                         double (*dfd)(double, double)) {
    const Matrix& av = node(a).value;
    Matrix out(av.rows, av.cols);
    for (int64_t i = 0; i < out.size(); ++i) out.data[i] = fwd(av.data[i]);
    bool rg = node(a).requires_grad;
    TensorId id = push(std::move(out), rg, op);
    if (rg) {
        nodes_[id].backward_fn = [this, a, id, dfd]() {
            const Matrix& g = nodes_[id].grad;
            const Matrix& x = nodes_[a].value;
            const Matrix& y = nodes_[id].value;
            Matrix& ga = grad_buf(a);
            for (int64_t i = 0; i < g.size(); ++i)
                ga.data[i] += g.data[i] * dfd(x.data[i], y.data[i]);
        };
    }
    return id;
}

TensorId Tape::relu(TensorId a) {
    // derivative at exactly 0 is defined as 0
    return unary_map(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

TensorId Tape::tanh(TensorId a) {
    return unary_map(
        a, "tanh", [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

TensorId Tape::exp(TensorId a) {
    return unary_map(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

TensorId Tape::log(TensorId a) {
    return unary_map(
        a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

TensorId Tape::sigmoid(TensorId a) {
    return unary_map(
        a, "sigmoid", [](double x) { return stable_sigmoid(x); },
        [](double, double y) { return y * (1.0 - y); });
}

TensorId Tape::softplus(TensorId a) {
    return unary_map(
        a, "softplus", [](double x) { return stable_softplus(x); },
        [](double x, double) { return stable_sigmoid(x); });
}

TensorId Tape::elementwise_mul(TensorId a, TensorId b) {
    check_shapes_equal(a, b, "elementwise_mul");
    const Matrix& av = node(a).value;
    const Matrix& bv = node(b).value;
    Matrix out(av.rows, av.cols);
    for (int64_t i = 0; i < out.size(); ++i) out.data[i] = av.data[i] * bv.data[i];
    bool rg = node(a).requires_grad || node(b).requires_grad;
    TensorId id = push(std::move(out), rg, "elementwise_mul");
    if (rg) {
        nodes_[id].backward_fn = [this, a, b, id]() {
            const Matrix& g = nodes_[id].grad;
            if (nodes_[a].requires_grad) {
                Matrix& ga = grad_buf(a);
                const Matrix& bv2 = nodes_[b].value;
                for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * bv2.data[i];
            }
            if (nodes_[b].requires_grad) {
                Matrix& gb = grad_buf(b);
                const Matrix& av2 = nodes_[a].value;
                for (int64_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * av2.data[i];
            }
        };
    }
    return id;
}

TensorId Tape::concat_cols(TensorId a, TensorId b) {
    const Matrix& av = node(a).value;
    const Matrix& bv = node(b).value;
    if (av.rows != bv.rows)
        throw DimensionError("concat_cols: shapes " + av.shape_str() + " and " + bv.shape_str() +
                             " have different row counts");
    Matrix out(av.rows, av.cols + bv.cols);
    for (int i = 0; i < av.rows; ++i) {
        for (int j = 0; j < av.cols; ++j) out(i, j) = av(i, j);
        for (int j = 0; j < bv.cols; ++j) out(i, av.cols + j) = bv(i, j);
    }
    bool rg = node(a).requires_grad || node(b).requires_grad;
    TensorId id = push(std::move(out), rg, "concat_cols");
    if (rg) {
        const int ac = av.cols;
        nodes_[id].backward_fn = [this, a, b, id, ac]() {
            const Matrix& g = nodes_[id].grad;
            if (nodes_[a].requires_grad) {
                Matrix& ga = grad_buf(a);
                for (int i = 0; i < ga.rows; ++i)
                    for (int j = 0; j < ga.cols; ++j) ga(i, j) += g(i, j);
            }
            if (nodes_[b].requires_grad) {
                Matrix& gb = grad_buf(b);
                for (int i = 0; i < gb.rows; ++i)
                    for (int j = 0; j < gb.cols; ++j) gb(i, j) += g(i, ac + j);
            }
        };
    }
    return id;
}

TensorId Tape::clamp(TensorId a, double lo, double hi) {
    const Matrix& av = node(a).value;
    Matrix out(av.rows, av.cols);
    for (int64_t i = 0; i < out.size(); ++i) out.data[i] = std::clamp(av.data[i], lo, hi);
    bool rg = node(a).requires_grad;
    TensorId id = push(std::move(out), rg, "clamp");
    if (rg) {
        nodes_[id].backward_fn = [this, a, id, lo, hi]() {
            const Matrix& g = nodes_[id].grad;
            const Matrix& x = nodes_[a].value;
            Matrix& ga = grad_buf(a);
            for (int64_t i = 0; i < g.size(); ++i)
                if (x.data[i] >= lo && x.data[i] <= hi) ga.data[i] += g.data[i];
        };
    }
    return id;
}

TensorId Tape::row_cosine_sim_matrix(TensorId a, TensorId b) {
    const Matrix& av = node(a).value;
    const Matrix& bv = node(b).value;
    if (av.cols != bv.cols)
        throw DimensionError("row_cosine_sim_matrix: shapes " + av.shape_str() + " and " +
                             bv.shape_str() + " have different widths");
    const int p = av.rows, q = bv.rows, k = av.cols;
    std::vector<double> na(p), nb(q);
    for (int i = 0; i < p; ++i) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += av(i, j) * av(i, j);
        na[i] = std::max(std::sqrt(s), kNormFloor);
    }
    for (int i = 0; i < q; ++i) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += bv(i, j) * bv(i, j);
        nb[i] = std::max(std::sqrt(s), kNormFloor);
    }
    Matrix out(p, q);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < q; ++j) {
            double dot = 0.0;
            for (int t = 0; t < k; ++t) dot += av(i, t) * bv(j, t);
            out(i, j) = dot / (na[i] * nb[j]);
        }
    bool rg = node(a).requires_grad || node(b).requires_grad;
    TensorId id = push(std::move(out), rg, "row_cosine_sim_matrix");
    if (rg) {
        nodes_[id].backward_fn = [this, a, b, id, na, nb]() {
            const Matrix& g = nodes_[id].grad;
            const Matrix& x = nodes_[a].value;
            const Matrix& y = nodes_[b].value;
            const Matrix& sim = nodes_[id].value;
            const int pp = x.rows, qq = y.rows, kk = x.cols;
            // Below the floor the norm is constant w.r.t. the row, so the
            // projection term vanishes.
            if (nodes_[a].requires_grad) {
                Matrix& ga = grad_buf(a);
                for (int i = 0; i < pp; ++i) {
                    const bool active = na[i] > kNormFloor;
                    for (int j = 0; j < qq; ++j) {
                        const double gij = g(i, j);
                        if (gij == 0.0) continue;
                        const double inv = 1.0 / (na[i] * nb[j]);
                        for (int t = 0; t < kk; ++t) {
                            double d = y(j, t) * inv;
                            if (active) d -= sim(i, j) * x(i, t) / (na[i] * na[i]);
                            ga(i, t) += gij * d;
                        }
                    }
                }
            }
            if (nodes_[b].requires_grad) {
                Matrix& gb = grad_buf(b);
                for (int j = 0; j < qq; ++j) {
                    const bool active = nb[j] > kNormFloor;
                    for (int i = 0; i < pp; ++i) {
                        const double gij = g(i, j);
                        if (gij == 0.0) continue;
                        const double inv = 1.0 / (na[i] * nb[j]);
                        for (int t = 0; t < kk; ++t) {
                            double d = x(i, t) * inv;
                            if (active) d -= sim(i, j) * y(j, t) / (nb[j] * nb[j]);
                            gb(j, t) += gij * d;
                        }
                    }
                }
            }
        };
    }
    return id;
}

TensorId Tape::reduce_mean(TensorId a) {
    const Matrix& av = node(a).value;
    if (av.size() == 0) throw DimensionError("reduce_mean: empty input");
    double s = 0.0;
    for (double v : av.data) s += v;
    Matrix out(1, 1);
    out(0, 0) = s / static_cast<double>(av.size());
    bool rg = node(a).requires_grad;
    TensorId id = push(std::move(out), rg, "reduce_mean");
    if (rg) {
        nodes_[id].backward_fn = [this, a, id]() {
            const double g = nodes_[id].grad(0, 0);
            Matrix& ga = grad_buf(a);
            const double w = g / static_cast<double>(ga.size());
            for (int64_t i = 0; i < ga.size(); ++i) ga.data[i] += w;
        };
    }
    return id;
}

TensorId Tape::reduce_sum(TensorId a) {
    const Matrix& av = node(a).value;
    double s = 0.0;
    for (double v : av.data) s += v;
    Matrix out(1, 1);
    out(0, 0) = s;
    bool rg = node(a).requires_grad;
    TensorId id = push(std::move(out), rg, "reduce_sum");
    if (rg) {
        nodes_[id].backward_fn = [this, a, id]() {
            const double g = nodes_[id].grad(0, 0);
            Matrix& ga = grad_buf(a);
            for (int64_t i = 0; i < ga.size(); ++i) ga.data[i] += g;
        };
    }
    return id;
}

TensorId Tape::softmax_rows(TensorId a) {
    const Matrix& av = node(a).value;
    Matrix out(av.rows, av.cols);
    for (int i = 0; i < av.rows; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < av.cols; ++j) mx = std::max(mx, av(i, j));
        double z = 0.0;
        for (int j = 0; j < av.cols; ++j) {
            out(i, j) = std::exp(av(i, j) - mx);
            z += out(i, j);
        }
        for (int j = 0; j < av.cols; ++j) out(i, j) /= z;
    }
    bool rg = node(a).requires_grad;
    TensorId id = push(std::move(out), rg, "softmax_rows");
    if (rg) {
        nodes_[id].backward_fn = [this, a, id]() {
            const Matrix& g = nodes_[id].grad;
            const Matrix& y = nodes_[id].value;
            Matrix& ga = grad_buf(a);
            for (int i = 0; i < y.rows; ++i) {
                double dot = 0.0;
                for (int j = 0; j < y.cols; ++j) dot += g(i, j) * y(i, j);
                for (int j = 0; j < y.cols; ++j) ga(i, j) += y(i, j) * (g(i, j) - dot);
            }
        };
    }
    return id;
}

TensorId Tape::logsumexp_rows(TensorId a) {
    const Matrix& av = node(a).value;
    Matrix out(av.rows, 1);
    for (int i = 0; i < av.rows; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < av.cols; ++j) mx = std::max(mx, av(i, j));
        double z = 0.0;
        for (int j = 0; j < av.cols; ++j) z += std::exp(av(i, j) - mx);
        out(i, 0) = mx + std::log(z);
    }
    bool rg = node(a).requires_grad;
    TensorId id = push(std::move(out), rg, "logsumexp_rows");
    if (rg) {
        nodes_[id].backward_fn = [this, a, id]() {
            const Matrix& g = nodes_[id].grad;
            const Matrix& x = nodes_[a].value;
            const Matrix& lse = nodes_[id].value;
            Matrix& ga = grad_buf(a);
            for (int i = 0; i < x.rows; ++i) {
                const double gi = g(i, 0);
                if (gi == 0.0) continue;
                for (int j = 0; j < x.cols; ++j)
                    ga(i, j) += gi * std::exp(x(i, j) - lse(i, 0));
            }
        };
    }
    return id;
}

TensorId Tape::take_diag(TensorId a) {
    const Matrix& av = node(a).value;
    if (av.rows != av.cols)
        throw DimensionError("take_diag: input " + av.shape_str() + " is not square");
    Matrix out(av.rows, 1);
    for (int i = 0; i < av.rows; ++i) out(i, 0) = av(i, i);
    bool rg = node(a).requires_grad;
    TensorId id = push(std::move(out), rg, "take_diag");
    if (rg) {
        nodes_[id].backward_fn = [this, a, id]() {
            const Matrix& g = nodes_[id].grad;
            Matrix& ga = grad_buf(a);
            for (int i = 0; i < g.rows; ++i) ga(i, i) += g(i, 0);
        };
    }
    return id;
}

TensorId Tape::reparameterize(TensorId mu, TensorId logvar, const Matrix& eps) {
    check_shapes_equal(mu, logvar, "reparameterize");
    const Matrix& mv = node(mu).value;
    const Matrix& lv = node(logvar).value;
    if (!mv.same_shape(eps))
        throw DimensionError("reparameterize: noise shape " + eps.shape_str() +
                             " does not match " + mv.shape_str());
    Matrix out(mv.rows, mv.cols);
    for (int64_t i = 0; i < out.size(); ++i)
        out.data[i] = mv.data[i] + std::exp(0.5 * lv.data[i]) * eps.data[i];
    bool rg = node(mu).requires_grad || node(logvar).requires_grad;
    TensorId id = push(std::move(out), rg, "reparameterize");
    if (rg) {
        nodes_[id].backward_fn = [this, mu, logvar, id, eps]() {
            const Matrix& g = nodes_[id].grad;
            if (nodes_[mu].requires_grad) {
                Matrix& gm = grad_buf(mu);
                for (int64_t i = 0; i < g.size(); ++i) gm.data[i] += g.data[i];
            }
            if (nodes_[logvar].requires_grad) {
                const Matrix& lv2 = nodes_[logvar].value;
                Matrix& gl = grad_buf(logvar);
                for (int64_t i = 0; i < g.size(); ++i)
                    gl.data[i] += g.data[i] * 0.5 * std::exp(0.5 * lv2.data[i]) * eps.data[i];
            }
        };
    }
    return id;
}

void Tape::backward(TensorId loss) {
    if (backward_done_)
        throw StateError("backward already ran on this tape; call reset() first");
    const TapeNode& ln = node(loss);
    if (ln.value.rows != 1 || ln.value.cols != 1)
        throw DimensionError("backward: loss must be 1x1, got " + ln.value.shape_str());
    if (!ln.requires_grad) throw StateError("backward: loss does not require gradients");
    backward_done_ = true;
    grad_buf(loss)(0, 0) = 1.0;
    for (TensorId id = loss; id >= 0; --id) {
        TapeNode& n = nodes_[id];
        // A node participates only if some consumer deposited a gradient.
        if (n.backward_fn && n.grad.rows > 0) n.backward_fn();
    }
    for (TensorId id = 0; id <= loss; ++id) {
        const TapeNode& n = nodes_[id];
        if (n.grad.rows > 0 && !n.grad.all_finite())
            throw NumericError(std::string("non-finite gradient at op '") + n.op + "'");
    }
}

void Tape::reset() {
    nodes_.clear();
    backward_done_ = false;
}

}  // namespace fairmib
