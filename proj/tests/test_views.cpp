// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fairmib/graph.hpp"
#include "fairmib/rng.hpp"
#include "fairmib/views.hpp"

using namespace fairmib;

namespace {

// Gaussian elimination with partial pivoting; solves A X = B for dense A.
Matrix dense_solve(Matrix a, Matrix b) {
    const int n = a.rows;
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
        if (pivot != col) {
            for (int j = 0; j < n; ++j) std::swap(a(col, j), a(pivot, j));
            for (int j = 0; j < b.cols; ++j) std::swap(b(col, j), b(pivot, j));
        }
        const double d = a(col, col);
        for (int r = col + 1; r < n; ++r) {
            const double f = a(r, col) / d;
            if (f == 0.0) continue;
            for (int j = col; j < n; ++j) a(r, j) -= f * a(col, j);
            for (int j = 0; j < b.cols; ++j) b(r, j) -= f * b(col, j);
        }
    }
    Matrix x(n, b.cols);
    for (int r = n - 1; r >= 0; --r)
        for (int j = 0; j < b.cols; ++j) {
            double acc = b(r, j);
            for (int k = r + 1; k < n; ++k) acc -= a(r, k) * x(k, j);
            x(r, j) = acc / a(r, r);
        }
    return x;
}

// alpha * (I - (1-alpha) * A)^(-1) * X, the infinite-horizon limit.
Matrix diffusion_closed_form(const CsrMatrix& a_norm, const Matrix& x, double alpha) {
    Matrix lhs = a_norm.to_dense();
    for (int64_t i = 0; i < lhs.size(); ++i) lhs.data[i] *= -(1.0 - alpha);
    for (int i = 0; i < lhs.rows; ++i) lhs(i, i) += 1.0;
    Matrix rhs = x;
    for (auto& v : rhs.data) v *= alpha;
    return dense_solve(lhs, rhs);
}

GraphDataset random_graph(Rng& rng, int n, int d, double p) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (rng.uniform() < p) edges.emplace_back(i, j);
    GraphDataset g;
    g.n = n;
    g.adjacency = CsrMatrix::from_edges(n, edges, true, true);
    g.m = g.adjacency.nnz() / 2;
    g.features = rng.normal_matrix(n, d);
    g.sensitive.resize(n);
    g.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        g.sensitive[i] = rng.uniform() < 0.5 ? 1 : 0;
        g.labels[i] = rng.uniform() < 0.5 ? 1 : 0;
    }
    return g;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (int64_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    return worst;
}

}  // namespace

TEST_CASE("estimate_propensity") {
    SUBCASE("constant S degenerates to clip(mean)") {
        Matrix x(4, 2, 0.5);
        PropensityConfig cfg;
        cfg.clip = 0.01;
        PropensityModel m = estimate_propensity(x, {1, 1, 1, 1}, cfg);
        CHECK(m.degenerate);
        auto e = propensity_scores(m, x);
        for (double v : e) CHECK(v == doctest::Approx(0.99).epsilon(1e-12));
    }
    SUBCASE("separable 1-d features saturate to the clip bounds") {
        Matrix x(4, 1);
        x(0, 0) = -2.0;
        x(1, 0) = -1.0;
        x(2, 0) = 1.0;
        x(3, 0) = 2.0;
        PropensityConfig cfg;
        cfg.learning_rate = 1.0;
        cfg.epochs = 4000;
        cfg.clip = 0.05;
        PropensityModel m = estimate_propensity(x, {0, 0, 1, 1}, cfg);
        auto e = propensity_scores(m, x);
        CHECK(e[0] == 0.05);  // clipped exactly
        CHECK(e[3] == 0.95);
    }
    SUBCASE("features independent of S approach mean(S)") {
        // closed-form optimum: zero weights, bias = logit(mean)
        Rng rng(8);
        const int n = 2000;
        Matrix x = rng.normal_matrix(n, 3);
        std::vector<int> s(n);
        for (int i = 0; i < n; ++i) s[i] = i % 2;  // mean 0.5, independent of x
        PropensityConfig cfg;
        cfg.epochs = 800;
        PropensityModel m = estimate_propensity(x, s, cfg);
        auto e = propensity_scores(m, x);
        for (double v : e) {
            CHECK(v > 0.45);
            CHECK(v < 0.55);
        }
    }
}

TEST_CASE("ipw_weights") {
    SUBCASE("direct substitutions") {
        auto w = ipw_weights({0.5, 0.2}, {1, 0});
        CHECK(w[0] == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(w[1] == doctest::Approx(1.25).epsilon(1e-15));
    }
    SUBCASE("weights are at least one") {
        Rng rng(4);
        std::vector<double> e(50);
        std::vector<int> s(50);
        for (int i = 0; i < 50; ++i) {
            e[i] = 0.05 + 0.9 * rng.uniform();
            s[i] = rng.uniform() < 0.5;
        }
        for (double w : ipw_weights(e, s)) CHECK(w >= 1.0);
    }
    SUBCASE("uniform e balances group-summed weights on balanced S") {
        std::vector<double> e(10, 0.5);
        std::vector<int> s{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
        auto w = ipw_weights(e, s);
        double sum0 = 0, sum1 = 0;  // summation oracle
        for (int i = 0; i < 10; ++i) (s[i] ? sum1 : sum0) += w[i];
        CHECK(sum0 == doctest::Approx(sum1).epsilon(1e-12));
    }
    SUBCASE("out-of-domain propensity rejected") {
        CHECK_THROWS_AS(ipw_weights({0.0}, {1}), NumericError);
        CHECK_THROWS_AS(ipw_weights({1.0}, {0}), NumericError);
    }
    SUBCASE("Horvitz-Thompson group masses on known propensities") {
        // e* known; ipw over e* must recover the population size per group
        Rng rng(123);
        const int n = 4000;
        std::vector<double> e(n);
        std::vector<int> s(n);
        for (int i = 0; i < n; ++i) {
            e[i] = 0.2 + 0.6 * rng.uniform();
            s[i] = rng.uniform() < e[i] ? 1 : 0;
        }
        auto w = ipw_weights(e, s);
        double mass1 = 0, mass0 = 0;
        for (int i = 0; i < n; ++i) (s[i] ? mass1 : mass0) += w[i];
        CHECK(mass1 == doctest::Approx(n).epsilon(0.10));
        CHECK(mass0 == doctest::Approx(n).epsilon(0.10));
    }
}

TEST_CASE("debias_features") {
    SUBCASE("unit weights are the identity") {
        Matrix x(3, 2, 1.5);
        Matrix out = debias_features(x, {1, 1, 1});
        CHECK(out.data == x.data);
    }
    SUBCASE("direct substitution") {
        Matrix x(2, 2);
        x(0, 0) = 1;
        x(0, 1) = 1;
        x(1, 0) = 3;
        x(1, 1) = 3;
        Matrix out = debias_features(x, {2, 1});
        CHECK(out(0, 0) == 2);
        CHECK(out(0, 1) == 2);
        CHECK(out(1, 0) == 3);
        CHECK(out(1, 1) == 3);
    }
    SUBCASE("random case matches the dense diag-matmul oracle") {
        Rng rng(9);
        Matrix x = rng.normal_matrix(5, 3);
        std::vector<double> w{1.1, 2.2, 0.5, 3.3, 0.9};
        Matrix diag(5, 5);
        for (int i = 0; i < 5; ++i) diag(i, i) = w[i];
        Matrix expect(5, 3);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 3; ++j) {
                double acc = 0;
                for (int k = 0; k < 5; ++k) acc += diag(i, k) * x(k, j);
                expect(i, j) = acc;
            }
        CHECK(max_abs_diff(debias_features(x, w), expect) < 1e-14);
    }
}

TEST_CASE("diffuse") {
    SUBCASE("alpha=1 is the identity for any K") {
        Rng rng(14);
        GraphDataset g = random_graph(rng, 8, 3, 0.4);
        CsrMatrix a = normalize_adjacency(g);
        Matrix out = diffuse(a, g.features, 1.0, 5);
        CHECK(out.data == g.features.data);
    }
    SUBCASE("single self-loop node is a fixed point") {
        GraphDataset g;
        g.n = 1;
        g.adjacency = CsrMatrix::from_edges(1, {}, true, true);
        g.m = 0;
        g.features = Matrix(1, 2, 3.5);
        g.sensitive = {0};
        g.labels = {0};
        CsrMatrix a = normalize_adjacency(g);
        for (double alpha : {0.1, 0.5, 0.9}) {
            Matrix out = diffuse(a, g.features, alpha, 7);
            CHECK(max_abs_diff(out, g.features) < 1e-12);
        }
    }
    SUBCASE("two-node graph, K=50 matches the dense closed form") {
        Rng rng(15);
        GraphDataset g = random_graph(rng, 2, 3, 1.0);
        CsrMatrix a = normalize_adjacency(g);
        Matrix truth = diffusion_closed_form(a, g.features, 0.1);
        Matrix approx = diffuse(a, g.features, 0.1, 50);
        CHECK(max_abs_diff(approx, truth) < 1e-8);
    }
    SUBCASE("error vs K shrinks geometrically with ratio (1-alpha)") {
        Rng rng(16);
        for (int trial = 0; trial < 4; ++trial) {
            const int n = 4 + static_cast<int>(rng.bounded(17));  // <= 20
            GraphDataset g = random_graph(rng, n, 2, 0.3);
            CsrMatrix a = normalize_adjacency(g);
            const double alpha = 0.2;
            Matrix truth = diffusion_closed_form(a, g.features, alpha);
            double prev = max_abs_diff(diffuse(a, g.features, alpha, 1), truth);
            for (int k = 2; k <= 12; ++k) {
                const double err = max_abs_diff(diffuse(a, g.features, alpha, k), truth);
                // the spectral radius of the normalized operator is <= 1
                CHECK(err <= (1.0 - alpha) * prev + 1e-13);
                prev = err;
            }
        }
    }
    SUBCASE("mass bound: sup norm never exceeds (1+K) times the input") {
        Rng rng(17);
        GraphDataset g = random_graph(rng, 12, 4, 0.3);
        CsrMatrix a = normalize_adjacency(g);
        const double bound = g.features.max_abs();
        for (int k = 1; k <= 6; ++k) {
            Matrix out = diffuse(a, g.features, 0.15, k);
            CHECK(out.all_finite());
            CHECK(out.max_abs() <= bound * (1.0 + k) + 1e-9);
        }
    }
}

TEST_CASE("build_views") {
    SynthSpec spec;
    spec.cell_sizes = {12, 12, 12, 12};
    spec.feature_dim = 5;
    spec.seed = 31;
    GraphDataset g = gen_synthetic(spec);
    g = make_splits(g, SplitSpec{0.5, 0.25, 0.25, 1});

    ViewConfig vc;
    vc.propensity.epochs = 50;

    SUBCASE("operators and shapes") {
        ViewBundle b = build_views(g, vc);
        CHECK(b.feature_view.op == ViewOperator::identity);
        CHECK(b.diffusion_view.op == ViewOperator::identity);
        CHECK(b.structural_view.op == ViewOperator::normalized_adjacency);
        // scrubbing one sensitive column: all three are n x (d-1)
        for (const View* v : {&b.feature_view, &b.structural_view, &b.diffusion_view}) {
            CHECK(v->features.rows == g.n);
            CHECK(v->features.cols == g.features.cols - 1);
        }
        for (double x : b.structural_view.features.data) CHECK(x == 1.0);
    }
    SUBCASE("alpha=1 with forced unit weights reproduces the feature view") {
        ViewBundle b = build_views(g, vc);
        Matrix forced = diffuse(b.a_norm, b.feature_view.features, 1.0, vc.hops);
        CHECK(forced.data == b.feature_view.features.data);
    }
    SUBCASE("deterministic for fixed inputs") {
        ViewBundle b1 = build_views(g, vc);
        ViewBundle b2 = build_views(g, vc);
        CHECK(b1.diffusion_view.features.data == b2.diffusion_view.features.data);
        CHECK(b1.weights == b2.weights);
    }
    SUBCASE("scrub can be disabled") {
        ViewConfig raw = vc;
        raw.scrub_sensitive = false;
        ViewBundle b = build_views(g, raw);
        CHECK(b.feature_view.features.cols == g.features.cols);
    }
}

TEST_CASE("scrub_sensitive_column") {
    Matrix x(2, 3);
    x(0, 0) = 1;
    x(0, 1) = 9;
    x(0, 2) = 2;
    x(1, 0) = 3;
    x(1, 1) = 8;
    x(1, 2) = 4;
    Matrix out = scrub_sensitive_column(x, 1);
    CHECK(out.cols == 2);
    CHECK(out(0, 0) == 1);
    CHECK(out(0, 1) == 2);
    CHECK(out(1, 0) == 3);
    CHECK(out(1, 1) == 4);
    // absent index is a no-op
    CHECK(scrub_sensitive_column(x, -1).data == x.data);
}
