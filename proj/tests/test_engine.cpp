// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fairmib/adam.hpp"
#include "fairmib/rng.hpp"
#include "fairmib/tape.hpp"

using namespace fairmib;

namespace {

Matrix make(int r, int c, std::initializer_list<double> vals) {
    Matrix m(r, c);
    std::copy(vals.begin(), vals.end(), m.data.begin());
    return m;
}

// Central finite differences of a scalar-valued rebuildable graph w.r.t. one
// leaf matrix. The builder gets fresh leaf values and returns the loss value.
template <typename BuildFn>
Matrix fd_gradient(Matrix x, BuildFn build, double h = 1e-5) {
    Matrix g(x.rows, x.cols);
    for (int64_t i = 0; i < x.size(); ++i) {
        const double keep = x.data[i];
        x.data[i] = keep + h;
        const double up = build(x);
        x.data[i] = keep - h;
        const double down = build(x);
        x.data[i] = keep;
        g.data[i] = (up - down) / (2.0 * h);
    }
    return g;
}

double max_rel_err(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a.data[i]), std::abs(b.data[i]), 1e-2});
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]) / denom);
    }
    return worst;
}

// Keeps relu/clamp test points away from their kinks.
Matrix random_smooth_input(Rng& rng, int r, int c, double margin = 1e-2) {
    Matrix m = rng.uniform_matrix(r, c, -2.0, 2.0);
    for (auto& v : m.data)
        if (std::abs(v) < margin) v += v >= 0 ? margin : -margin;
    return m;
}

}  // namespace

TEST_CASE("forward op examples") {
    Tape t;

    SUBCASE("matmul identity") {
        TensorId i3 = t.leaf(Matrix::identity(3));
        TensorId x = t.leaf(make(3, 2, {1, 2, 3, 4, 5, 6}));
        const Matrix& out = t.value(t.matmul(i3, x));
        for (int64_t k = 0; k < out.size(); ++k) CHECK(out.data[k] == t.value(x).data[k]);
    }
    SUBCASE("relu definition") {
        TensorId x = t.leaf(make(1, 2, {-1.0, 2.0}));
        const Matrix& out = t.value(t.relu(x));
        CHECK(out(0, 0) == 0.0);
        CHECK(out(0, 1) == 2.0);
    }
    SUBCASE("cosine self-similarity diagonal") {
        TensorId u = t.leaf(make(3, 2, {1, 2, -3, 4, 0.5, -0.25}));
        const Matrix& sim = t.value(t.row_cosine_sim_matrix(u, u));
        for (int i = 0; i < 3; ++i) CHECK(sim(i, i) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("softmax rows sum to one") {
        TensorId x = t.leaf(make(2, 3, {1, 2, 3, -5, 0, 5}));
        const Matrix& sm = t.value(t.softmax_rows(x));
        for (int i = 0; i < 2; ++i) {
            double s = 0;
            for (int j = 0; j < 3; ++j) s += sm(i, j);
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    SUBCASE("shape mismatch names both shapes") {
        TensorId a = t.leaf(Matrix(2, 3));
        TensorId b = t.leaf(Matrix(4, 5));
        CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("2x3"), DimensionError);
        CHECK_THROWS_AS(t.add(a, b), DimensionError);
    }
    SUBCASE("non-finite output names the op") {
        TensorId a = t.leaf(make(1, 1, {-1.0}));
        CHECK_THROWS_WITH_AS(t.log(a), doctest::Contains("log"), NumericError);
    }
}

TEST_CASE("backward basics") {
    SUBCASE("grad of sum is all ones") {
        Tape t;
        TensorId x = t.leaf(make(2, 3, {1, -2, 3, 4, -5, 6}), true);
        t.backward(t.reduce_sum(x));
        for (double g : t.grad(x).data) CHECK(g == 1.0);
    }
    SUBCASE("relu subgradient at negatives is zero") {
        Tape t;
        TensorId x = t.leaf(make(1, 2, {-1.0, 2.0}), true);
        t.backward(t.reduce_sum(t.relu(x)));
        CHECK(t.grad(x)(0, 0) == 0.0);
        CHECK(t.grad(x)(0, 1) == 1.0);
    }
    SUBCASE("backward twice is a state error") {
        Tape t;
        TensorId x = t.leaf(make(1, 1, {2.0}), true);
        TensorId l = t.reduce_sum(x);
        t.backward(l);
        CHECK_THROWS_AS(t.backward(l), StateError);
        t.reset();
        CHECK(t.size() == 0);
    }
    SUBCASE("gradients accumulate over multiple consumers") {
        Tape t;
        TensorId x = t.leaf(make(1, 1, {3.0}), true);
        TensorId y = t.add(x, x);  // dy/dx = 2
        t.backward(t.reduce_sum(y));
        CHECK(t.grad(x)(0, 0) == 2.0);
    }
}

TEST_CASE("finite-difference oracle over a random composite graph") {
    // Six parameters through matmul/relu/tanh/cosine/logsumexp/softplus ops.
    Rng rng(99);
    Matrix a0 = random_smooth_input(rng, 3, 4);
    Matrix b0 = random_smooth_input(rng, 4, 3);
    Matrix c0 = random_smooth_input(rng, 3, 3);
    Matrix d0 = random_smooth_input(rng, 3, 3);
    Matrix e0 = random_smooth_input(rng, 1, 3);
    Matrix f0 = random_smooth_input(rng, 3, 1);

    auto stage = [&](Tape& t, const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d,
                     const Matrix& e, const Matrix& f) {
        TensorId ta = t.leaf(a, true), tb = t.leaf(b, true), tc = t.leaf(c, true),
                 td = t.leaf(d, true), te = t.leaf(e, true), tf = t.leaf(f, true);
        TensorId h = t.relu(t.add_rowvec(t.matmul(ta, tb), te));
        TensorId sims = t.row_cosine_sim_matrix(h, t.tanh(tc));
        TensorId mix = t.elementwise_mul(t.softmax_rows(sims), t.exp(t.scale(td, 0.3)));
        TensorId v = t.add(t.logsumexp_rows(mix), t.softplus(tf));
        TensorId l = t.reduce_mean(t.concat_cols(v, t.take_diag(sims)));
        return std::tuple{ta, tb, tc, td, te, tf, l};
    };

    Tape t;
    auto [ta, tb, tc, td, te, tf, loss] = stage(t, a0, b0, c0, d0, e0, f0);
    t.backward(loss);

    auto loss_with = [&](const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d,
                         const Matrix& e, const Matrix& f) {
        Tape t2;
        auto [x1, x2, x3, x4, x5, x6, l] = stage(t2, a, b, c, d, e, f);
        (void)x1;
        (void)x2;
        (void)x3;
        (void)x4;
        (void)x5;
        (void)x6;
        return t2.value(l)(0, 0);
    };

    auto check_param = [&](const Matrix& p0, TensorId id, auto rebuild) {
        Matrix fd = fd_gradient(p0, rebuild, 1e-4);
        CHECK(max_rel_err(t.grad(id), fd) < 1e-4);
    };
    check_param(a0, ta, [&](const Matrix& p) { return loss_with(p, b0, c0, d0, e0, f0); });
    check_param(b0, tb, [&](const Matrix& p) { return loss_with(a0, p, c0, d0, e0, f0); });
    check_param(c0, tc, [&](const Matrix& p) { return loss_with(a0, b0, p, d0, e0, f0); });
    check_param(d0, td, [&](const Matrix& p) { return loss_with(a0, b0, c0, p, e0, f0); });
    check_param(e0, te, [&](const Matrix& p) { return loss_with(a0, b0, c0, d0, p, f0); });
    check_param(f0, tf, [&](const Matrix& p) { return loss_with(a0, b0, c0, d0, e0, p); });
}

TEST_CASE("remaining unary ops differentiate correctly") {
    Rng rng(123);
    // positive inputs keep log in domain; margin keeps clamp off its kinks
    Matrix x0 = rng.uniform_matrix(3, 4, 0.2, 1.8);

    auto stage = [](Tape& t, const Matrix& x) {
        TensorId tx = t.leaf(x, true);
        TensorId a = t.log(tx);
        TensorId b = t.sigmoid(t.scale(tx, -1.3));
        TensorId c = t.clamp(t.add_scalar(tx, 0.4), 0.0, 2.0);
        return std::pair{tx, t.reduce_mean(t.elementwise_mul(t.add(a, b), c))};
    };
    Tape t;
    auto [tx, loss] = stage(t, x0);
    t.backward(loss);
    Matrix fd = fd_gradient(x0, [&](const Matrix& p) {
        Tape t2;
        return t2.value(stage(t2, p).second)(0, 0);
    });
    CHECK(max_rel_err(t.grad(tx), fd) < 1e-4);
    // clamp blocks gradient outside its range
    Tape t3;
    TensorId y = t3.leaf(make(1, 2, {5.0, 0.5}), true);
    t3.backward(t3.reduce_sum(t3.clamp(y, -1.0, 1.0)));
    CHECK(t3.grad(y)(0, 0) == 0.0);
    CHECK(t3.grad(y)(0, 1) == 1.0);
}

TEST_CASE("spmm matches dense matmul and differentiates") {
    Rng rng(5);
    CsrMatrix s = CsrMatrix::from_edges(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}}, true, true);
    Matrix x0 = random_smooth_input(rng, 4, 3);

    Tape t;
    TensorId x = t.leaf(x0, true);
    TensorId out = t.spmm(s, x);

    // dense oracle for the forward product
    Matrix dense = s.to_dense();
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0;
            for (int k = 0; k < 4; ++k) acc += dense(i, k) * x0(k, j);
            CHECK(t.value(out)(i, j) == doctest::Approx(acc).epsilon(1e-12));
        }

    TensorId loss = t.reduce_mean(t.elementwise_mul(out, out));
    t.backward(loss);
    Matrix fd = fd_gradient(x0, [&](const Matrix& p) {
        Tape t2;
        TensorId xx = t2.leaf(p, true);
        TensorId o = t2.spmm(s, xx);
        return t2.value(t2.reduce_mean(t2.elementwise_mul(o, o)))(0, 0);
    });
    CHECK(max_rel_err(t.grad(x), fd) < 1e-4);
}

TEST_CASE("reparameterize") {
    Matrix mu0 = make(2, 2, {0.3, -0.7, 1.1, 0.0});
    Matrix lv0 = make(2, 2, {0.0, 0.5, -1.0, 0.25});

    SUBCASE("zero noise returns mu") {
        Tape t;
        Matrix eps(2, 2);
        TensorId z = t.reparameterize(t.leaf(mu0), t.leaf(lv0), eps);
        for (int64_t i = 0; i < 4; ++i) CHECK(t.value(z).data[i] == mu0.data[i]);
    }
    SUBCASE("unit variance adds the noise") {
        Tape t;
        Matrix eps = make(2, 2, {1, -2, 3, -4});
        TensorId z = t.reparameterize(t.leaf(mu0), t.leaf(Matrix(2, 2)), eps);
        for (int64_t i = 0; i < 4; ++i)
            CHECK(t.value(z).data[i] == doctest::Approx(mu0.data[i] + eps.data[i]));
    }
    SUBCASE("grad wrt logvar at logvar=0 is eps/2") {
        Matrix eps = make(2, 2, {1.0, -0.5, 0.25, 2.0});
        Matrix zeros(2, 2);
        Tape t;
        TensorId lv = t.leaf(zeros, true);
        TensorId z = t.reparameterize(t.leaf(mu0), lv, eps);
        t.backward(t.reduce_sum(z));
        for (int64_t i = 0; i < 4; ++i)
            CHECK(t.grad(lv).data[i] == doctest::Approx(0.5 * eps.data[i]).epsilon(1e-12));
        // and the finite-difference oracle agrees
        Matrix fd = fd_gradient(zeros, [&](const Matrix& p) {
            Tape t2;
            TensorId zz = t2.reparameterize(t2.leaf(mu0), t2.leaf(p, true), eps);
            return t2.value(t2.reduce_sum(zz))(0, 0);
        });
        CHECK(max_rel_err(t.grad(lv), fd) < 1e-4);
    }
}

TEST_CASE("adam") {
    SUBCASE("zero gradient is a fixed point") {
        ParamStore params{{"w", make(1, 2, {1.0, -2.0})}};
        GradStore grads{{"w", Matrix(1, 2)}};
        AdamState adam(AdamConfig{0.1});
        adam.step(params, grads);
        CHECK(params["w"](0, 0) == 1.0);
        CHECK(params["w"](0, 1) == -2.0);
    }
    SUBCASE("hand-rolled three-step oracle, scalar param") {
        // independent reimplementation of the update rule
        const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 1.0;
        double p_ref = 0.0, m = 0.0, v = 0.0;
        ParamStore params{{"w", make(1, 1, {0.0})}};
        GradStore grads{{"w", make(1, 1, {g})}};
        AdamState adam(AdamConfig{lr});
        for (int step = 1; step <= 3; ++step) {
            m = b1 * m + (1 - b1) * g;
            v = b2 * v + (1 - b2) * g * g;
            p_ref -= lr * (m / (1 - std::pow(b1, step))) /
                     (std::sqrt(v / (1 - std::pow(b2, step))) + eps);
            adam.step(params, grads);
            CHECK(params["w"](0, 0) == doctest::Approx(p_ref).epsilon(1e-14));
        }
    }
    SUBCASE("first step is approximately -lr for unit gradient") {
        ParamStore params{{"w", make(1, 1, {0.0})}};
        GradStore grads{{"w", make(1, 1, {1.0})}};
        AdamState adam(AdamConfig{0.1});
        adam.step(params, grads);
        CHECK(params["w"](0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
    }
    SUBCASE("identical params and grads follow identical trajectories") {
        ParamStore params{{"a", make(1, 1, {0.5})}, {"b", make(1, 1, {0.5})}};
        AdamState adam(AdamConfig{0.05});
        Rng rng(3);
        for (int i = 0; i < 10; ++i) {
            const double g = rng.normal();
            GradStore grads{{"a", make(1, 1, {g})}, {"b", make(1, 1, {g})}};
            adam.step(params, grads);
            CHECK(params["a"](0, 0) == params["b"](0, 0));
        }
    }
    SUBCASE("non-finite gradient aborts the step") {
        ParamStore params{{"w", make(1, 1, {0.0})}};
        GradStore grads{{"w", make(1, 1, {std::nan("")})}};
        AdamState adam;
        CHECK_THROWS_AS(adam.step(params, grads), NumericError);
        CHECK(params["w"](0, 0) == 0.0);
    }
}

TEST_CASE("seeded rng") {
    SUBCASE("same seed, same stream") {
        Rng a(42), b(42);
        for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
    }
    SUBCASE("statistical sanity of normals") {
        Rng rng(7);
        const int n = 100000;
        double mean = 0.0, var = 0.0;
        std::vector<double> xs(n);
        for (auto& x : xs) x = rng.normal();
        for (double x : xs) mean += x;
        mean /= n;
        for (double x : xs) var += (x - mean) * (x - mean);
        var /= n - 1;
        CHECK(mean > -0.02);
        CHECK(mean < 0.02);
        CHECK(var == doctest::Approx(1.0).epsilon(0.03));
    }
    SUBCASE("distinct seeds diverge quickly") {
        Rng a(1), b(2);
        bool differs = false;
        for (int i = 0; i < 10 && !differs; ++i) differs = a.normal() != b.normal();
        CHECK(differs);
    }
    SUBCASE("bounded draws stay in range") {
        Rng rng(11);
        for (int i = 0; i < 1000; ++i) CHECK(rng.bounded(7) < 7);
    }
}

TEST_CASE("tape replay determinism") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        Matrix a = rng.normal_matrix(4, 4);
        Matrix b = rng.normal_matrix(4, 2);
        Tape t;
        TensorId loss =
            t.reduce_mean(t.softplus(t.matmul(t.leaf(a, true), t.leaf(b, true))));
        return t.value(loss)(0, 0);
    };
    CHECK(run(123) == run(123));  // bit-identical
    CHECK(run(123) != run(124));
}
