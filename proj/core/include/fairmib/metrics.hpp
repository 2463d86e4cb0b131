// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fairmib {

// Utility and group-fairness numbers for one evaluation mask. All rates live
// in [0,1]; the CLI renders them in percentage points.
struct MetricsReport {
    double acc = 0.0;
    double f1 = 0.0;
    std::optional<double> auc;  // absent when the mask holds a single class
    double dp_diff = 0.0;
    double eo_diff = 0.0;
    double pos_rate[2] = {0.0, 0.0};  // positive prediction rate per group
    double tpr[2] = {0.0, 0.0};       // true positive rate per group
    int n_eval = 0;
    uint64_t seed = 0;

    std::string to_json() const;
    static MetricsReport from_json(const std::string& text);
};

struct MetricsAggregate {
    MetricsReport mean;
    MetricsReport stddev;  // sample std (n-1); zero for a single report
    int count = 0;
};

// Threshold rule: probabilities >= threshold are positive (ties go positive).
std::vector<int> binarize(const std::vector<double>& probabilities, double threshold = 0.5);

// |P(pred=1 | s=0) - P(pred=1 | s=1)| by counting over masked nodes. Throws
// UndefinedMetricError naming the group when one group is empty in the mask.
double demographic_parity_diff(const std::vector<int>& pred, const std::vector<int>& sensitive,
                               const std::vector<uint8_t>& mask);

// |TPR(s=0) - TPR(s=1)| over masked nodes with y=1. Throws when a group has
// no positives.
double equal_opportunity_diff(const std::vector<int>& pred, const std::vector<int>& labels,
                              const std::vector<int>& sensitive,
                              const std::vector<uint8_t>& mask);

struct UtilityMetrics {
    double acc = 0.0;
    double f1 = 0.0;  // positive-class F1; 0 when precision+recall vanish
    std::optional<double> auc;  // Mann-Whitney rank statistic, ties count 1/2
};

UtilityMetrics utility_metrics(const std::vector<double>& prob, const std::vector<int>& pred,
                               const std::vector<int>& labels,
                               const std::vector<uint8_t>& mask);

// Full report over one mask.
MetricsReport evaluate(const std::vector<double>& prob, const std::vector<int>& labels,
                       const std::vector<int>& sensitive, const std::vector<uint8_t>& mask,
                       uint64_t seed = 0, double threshold = 0.5);

MetricsAggregate aggregate(const std::vector<MetricsReport>& reports);

}  // namespace fairmib
