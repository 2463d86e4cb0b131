// SPDX-License-Identifier: Apache-2.0
#include "fairmib/views.hpp"

#include <cmath>
#include <iostream>

#include "fairmib/errors.hpp"

namespace fairmib {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

double PropensityModel::predict(const double* x, int d) const {
    double z = bias;
    for (int j = 0; j < d; ++j) z += weights[j] * x[j];
    return std::clamp(sigmoid(z), clip, 1.0 - clip);
}

PropensityModel estimate_propensity(const Matrix& features, const std::vector<int>& sensitive,
                                    const PropensityConfig& config,
                                    const std::vector<uint8_t>& mask) {
    if (static_cast<int>(sensitive.size()) != features.rows)
        throw DimensionError("estimate_propensity: " + std::to_string(sensitive.size()) +
                             " sensitive values for " + features.shape_str() + " features");
    if (config.clip <= 0.0 || config.clip >= 0.5)
        throw ValidationError("propensity clip must lie in (0, 0.5)");
    if (!features.all_finite())
        throw ValidationError("estimate_propensity: non-finite feature matrix");

    const int n = features.rows, d = features.cols;
    std::vector<int> rows;
    for (int i = 0; i < n; ++i)
        if (mask.empty() || mask[i]) rows.push_back(i);
    if (rows.empty()) throw ValidationError("estimate_propensity: empty training mask");

    PropensityModel model;
    model.weights.assign(d, 0.0);
    model.clip = config.clip;

    double mean_s = 0.0;
    for (int i : rows) mean_s += sensitive[i];
    mean_s /= static_cast<double>(rows.size());
    if (mean_s == 0.0 || mean_s == 1.0) {
        std::cerr << "[fairmib] warning: sensitive attribute is constant on the fit rows; "
                     "propensity degenerates to clip(mean)\n";
        model.degenerate = true;
        // logit of the clipped constant so predict() reproduces it exactly
        const double p = std::clamp(mean_s, config.clip, 1.0 - config.clip);
        model.bias = std::log(p / (1.0 - p));
        return model;
    }

    const double inv_m = 1.0 / static_cast<double>(rows.size());
    std::vector<double> gw(d);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::fill(gw.begin(), gw.end(), 0.0);
        double gb = 0.0;
        for (int i : rows) {
            const double* x = &features.data[static_cast<size_t>(i) * d];
            double z = model.bias;
            for (int j = 0; j < d; ++j) z += model.weights[j] * x[j];
            const double err = sigmoid(z) - sensitive[i];
            for (int j = 0; j < d; ++j) gw[j] += err * x[j];
            gb += err;
        }
        for (int j = 0; j < d; ++j) model.weights[j] -= config.learning_rate * inv_m * gw[j];
        model.bias -= config.learning_rate * inv_m * gb;
    }
    return model;
}

std::vector<double> propensity_scores(const PropensityModel& model, const Matrix& features) {
    std::vector<double> e(features.rows);
    for (int i = 0; i < features.rows; ++i)
        e[i] = model.predict(&features.data[static_cast<size_t>(i) * features.cols],
                             features.cols);
    return e;
}

std::vector<double> ipw_weights(const std::vector<double>& e, const std::vector<int>& sensitive) {
    if (e.size() != sensitive.size())
        throw DimensionError("ipw_weights: propensity and sensitive lengths differ");
    std::vector<double> w(e.size());
    for (size_t i = 0; i < e.size(); ++i) {
        if (!(e[i] > 0.0 && e[i] < 1.0))
            throw NumericError("ipw_weights: propensity " + std::to_string(e[i]) + " at node " +
                               std::to_string(i) + " outside (0,1)");
        w[i] = sensitive[i] ? 1.0 / e[i] : 1.0 / (1.0 - e[i]);
    }
    return w;
}

Matrix debias_features(const Matrix& features, const std::vector<double>& weights) {
    if (static_cast<int>(weights.size()) != features.rows)
        throw DimensionError("debias_features: " + std::to_string(weights.size()) +
                             " weights for " + features.shape_str() + " features");
    Matrix out(features.rows, features.cols);
    for (int i = 0; i < features.rows; ++i)
        for (int j = 0; j < features.cols; ++j) out(i, j) = weights[i] * features(i, j);
    return out;
}

Matrix diffuse(const CsrMatrix& a_norm, const Matrix& features, double alpha, int hops) {
    if (alpha <= 0.0 || alpha > 1.0)
        throw ValidationError("diffuse: alpha must lie in (0,1], got " + std::to_string(alpha));
    if (hops < 1) throw ValidationError("diffuse: hops must be >= 1");
    if (a_norm.cols != features.rows)
        throw DimensionError("diffuse: operator " + std::to_string(a_norm.rows) + "x" +
                             std::to_string(a_norm.cols) + " vs features " +
                             features.shape_str());
    Matrix h = features;
    Matrix propagated;
    for (int k = 0; k < hops; ++k) {
        a_norm.multiply(h, propagated);
        for (int64_t i = 0; i < h.size(); ++i)
            h.data[i] = (1.0 - alpha) * propagated.data[i] + alpha * features.data[i];
        if (!h.all_finite()) throw NumericError("diffuse: non-finite values at hop " +
                                                std::to_string(k + 1));
    }
    return h;
}

Matrix scrub_sensitive_column(const Matrix& features, int sensitive_column_index) {
    if (sensitive_column_index < 0) return features;
    if (sensitive_column_index >= features.cols)
        throw ValidationError("sensitive column index out of range");
    if (features.cols == 1)
        throw ValidationError("cannot scrub the only feature column");
    Matrix out(features.rows, features.cols - 1);
    for (int i = 0; i < features.rows; ++i) {
        int c = 0;
        for (int j = 0; j < features.cols; ++j) {
            if (j == sensitive_column_index) continue;
            out(i, c++) = features(i, j);
        }
    }
    return out;
}

ViewBundle build_views(const GraphDataset& g, const ViewConfig& config) {
    g.validate();
    ViewBundle b;
    b.alpha = config.alpha;
    b.hops = config.hops;
    b.a_norm = normalize_adjacency(g);

    const Matrix x = config.scrub_sensitive
                         ? scrub_sensitive_column(g.features, g.sensitive_column_index)
                         : g.features;

    PropensityModel pm = estimate_propensity(x, g.sensitive, config.propensity, g.train_mask);
    b.propensity = propensity_scores(pm, x);
    b.weights = ipw_weights(b.propensity, g.sensitive);
    const Matrix corrected = debias_features(x, b.weights);

    b.feature_view = {ViewOperator::identity, x};
    b.structural_view = {ViewOperator::normalized_adjacency, Matrix::ones(g.n, x.cols)};
    b.diffusion_view = {ViewOperator::identity,
                        diffuse(b.a_norm, corrected, config.alpha, config.hops)};
    return b;
}

}  // namespace fairmib
