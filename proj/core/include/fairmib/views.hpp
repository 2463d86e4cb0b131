// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "fairmib/csr.hpp"
#include "fairmib/graph.hpp"
#include "fairmib/matrix.hpp"

namespace fairmib {

// Logistic model for the group-membership probability e(i) = P(s=1 | x_i).
struct PropensityModel {
    std::vector<double> weights;  // length d
    double bias = 0.0;
    double clip = 0.05;  // predicted probabilities clipped to [clip, 1-clip]
    bool degenerate = false;  // all-same S; predictions collapse to a constant

    // Clipped probability for one feature row.
    double predict(const double* x, int d) const;
};

struct PropensityConfig {
    double learning_rate = 0.5;
    int epochs = 500;
    double clip = 0.05;
};

// Fits e(i) by full-batch gradient descent on the masked rows (all rows when
// the mask is empty). An all-same S degenerates to the constant
// clip(mean(S)) with a warning instead of failing.
PropensityModel estimate_propensity(const Matrix& features, const std::vector<int>& sensitive,
                                    const PropensityConfig& config,
                                    const std::vector<uint8_t>& mask = {});

// Clipped probabilities for every row.
std::vector<double> propensity_scores(const PropensityModel& model, const Matrix& features);

// w_i = s_i / e_i + (1 - s_i) / (1 - e_i). Every weight is >= 1.
std::vector<double> ipw_weights(const std::vector<double>& e, const std::vector<int>& sensitive);

// X' = diag(w) * X.
Matrix debias_features(const Matrix& features, const std::vector<double>& weights);

// Truncated personalized-PageRank propagation:
//   H^0 = X', H^{k+1} = (1 - alpha) * A_norm * H^k + alpha * X'
// returning H^K. For K -> inf this converges to
// alpha * (I - (1-alpha) * A_norm)^(-1) * X'.
Matrix diffuse(const CsrMatrix& a_norm, const Matrix& features, double alpha, int hops);

enum class ViewOperator { identity, normalized_adjacency };

struct View {
    ViewOperator op = ViewOperator::identity;
    Matrix features;
};

// The three disentangled inputs. feature_view and diffusion_view use the
// identity operator (no cross-node edges); structural_view propagates an
// all-ones feature matrix through the normalized adjacency.
struct ViewBundle {
    View feature_view;
    View structural_view;
    View diffusion_view;
    CsrMatrix a_norm;  // operator of the structural view; also drives diffuse
    double alpha = 0.1;
    int hops = 3;
    // Diagnostics from the IPW correction, aligned with the dataset rows.
    std::vector<double> propensity;
    std::vector<double> weights;
};

struct ViewConfig {
    double alpha = 0.1;
    int hops = 3;
    PropensityConfig propensity;
    // Remove the embedded sensitive column from X before anything else sees
    // it. S stays available separately for the decoder and IPW.
    bool scrub_sensitive = true;
};

// Removes the recorded sensitive column from X (no-op when absent).
Matrix scrub_sensitive_column(const Matrix& features, int sensitive_column_index);

ViewBundle build_views(const GraphDataset& g, const ViewConfig& config);

}  // namespace fairmib
