// SPDX-License-Identifier: Apache-2.0
#include "fairmib/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fairmib/errors.hpp"

using nlohmann::json;

namespace fairmib {

namespace {

void check_lengths(size_t n, size_t mask_len, const char* what) {
    if (n != mask_len)
        throw DimensionError(std::string(what) + ": vector length " + std::to_string(n) +
                             " differs from mask length " + std::to_string(mask_len));
}

}  // namespace

std::vector<int> binarize(const std::vector<double>& probabilities, double threshold) {
    std::vector<int> out(probabilities.size());
    for (size_t i = 0; i < probabilities.size(); ++i)
        out[i] = probabilities[i] >= threshold ? 1 : 0;
    return out;
}

double demographic_parity_diff(const std::vector<int>& pred, const std::vector<int>& sensitive,
                               const std::vector<uint8_t>& mask) {
    check_lengths(pred.size(), mask.size(), "demographic_parity_diff");
    int count[2] = {0, 0}, pos[2] = {0, 0};
    for (size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i]) continue;
        const int s = sensitive[i];
        count[s]++;
        pos[s] += pred[i] ? 1 : 0;
    }
    for (int s = 0; s < 2; ++s)
        if (count[s] == 0)
            throw UndefinedMetricError("demographic parity undefined: group s=" +
                                       std::to_string(s) + " is empty in the mask");
    return std::abs(static_cast<double>(pos[0]) / count[0] -
                    static_cast<double>(pos[1]) / count[1]);
}

double equal_opportunity_diff(const std::vector<int>& pred, const std::vector<int>& labels,
                              const std::vector<int>& sensitive,
                              const std::vector<uint8_t>& mask) {
    check_lengths(pred.size(), mask.size(), "equal_opportunity_diff");
    int count[2] = {0, 0}, tp[2] = {0, 0};
    for (size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i] || labels[i] != 1) continue;
        const int s = sensitive[i];
        count[s]++;
        tp[s] += pred[i] ? 1 : 0;
    }
    for (int s = 0; s < 2; ++s)
        if (count[s] == 0)
            throw UndefinedMetricError("equal opportunity undefined: group s=" +
                                       std::to_string(s) + " has no positive nodes in the mask");
    return std::abs(static_cast<double>(tp[0]) / count[0] -
                    static_cast<double>(tp[1]) / count[1]);
}

UtilityMetrics utility_metrics(const std::vector<double>& prob, const std::vector<int>& pred,
                               const std::vector<int>& labels,
                               const std::vector<uint8_t>& mask) {
    check_lengths(prob.size(), mask.size(), "utility_metrics");
    UtilityMetrics u;
    int correct = 0, total = 0, tp = 0, fp = 0, fn = 0;
    std::vector<int> idx;
    for (size_t i = 0; i < prob.size(); ++i) {
        if (!mask[i]) continue;
        ++total;
        idx.push_back(static_cast<int>(i));
        if (pred[i] == labels[i]) ++correct;
        if (pred[i] == 1 && labels[i] == 1) ++tp;
        if (pred[i] == 1 && labels[i] == 0) ++fp;
        if (pred[i] == 0 && labels[i] == 1) ++fn;
    }
    if (total == 0) throw ValidationError("utility_metrics: mask selects no nodes");
    u.acc = static_cast<double>(correct) / total;

    const double prec_den = tp + fp, rec_den = tp + fn;
    const double prec = prec_den > 0 ? tp / prec_den : 0.0;
    const double rec = rec_den > 0 ? tp / rec_den : 0.0;
    u.f1 = (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;

    // AUC as the Mann-Whitney statistic via midranks; ties contribute 1/2.
    int64_t n_pos = 0, n_neg = 0;
    for (int i : idx) (labels[i] == 1 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) {
        u.auc = std::nullopt;
        return u;
    }
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return prob[a] < prob[b]; });
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < idx.size()) {
        size_t j = i;
        while (j < idx.size() && prob[idx[j]] == prob[idx[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (size_t k = i; k < j; ++k)
            if (labels[idx[k]] == 1) rank_sum_pos += midrank;
        i = j;
    }
    const double u_stat = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
    u.auc = u_stat / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
    return u;
}

MetricsReport evaluate(const std::vector<double>& prob, const std::vector<int>& labels,
                       const std::vector<int>& sensitive, const std::vector<uint8_t>& mask,
                       uint64_t seed, double threshold) {
    const std::vector<int> pred = binarize(prob, threshold);
    MetricsReport r;
    r.seed = seed;
    const UtilityMetrics u = utility_metrics(prob, pred, labels, mask);
    r.acc = u.acc;
    r.f1 = u.f1;
    r.auc = u.auc;
    r.dp_diff = demographic_parity_diff(pred, sensitive, mask);
    r.eo_diff = equal_opportunity_diff(pred, labels, sensitive, mask);

    int count[2] = {0, 0}, pos[2] = {0, 0}, ycount[2] = {0, 0}, tp[2] = {0, 0};
    for (size_t i = 0; i < prob.size(); ++i) {
        if (!mask[i]) continue;
        const int s = sensitive[i];
        ++r.n_eval;
        count[s]++;
        pos[s] += pred[i];
        if (labels[i] == 1) {
            ycount[s]++;
            tp[s] += pred[i];
        }
    }
    for (int s = 0; s < 2; ++s) {
        r.pos_rate[s] = count[s] ? static_cast<double>(pos[s]) / count[s] : 0.0;
        r.tpr[s] = ycount[s] ? static_cast<double>(tp[s]) / ycount[s] : 0.0;
    }
    return r;
}

MetricsAggregate aggregate(const std::vector<MetricsReport>& reports) {
    if (reports.empty()) throw ValidationError("aggregate: no reports");
    MetricsAggregate agg;
    agg.count = static_cast<int>(reports.size());
    const double n = static_cast<double>(reports.size());

    auto mean_std = [&](auto getter, double& mean_out, double& std_out) {
        double mean = 0.0;
        for (const auto& r : reports) mean += getter(r);
        mean /= n;
        double var = 0.0;
        if (reports.size() > 1) {
            for (const auto& r : reports) {
                const double d = getter(r) - mean;
                var += d * d;
            }
            var /= (n - 1.0);
        }
        mean_out = mean;
        std_out = std::sqrt(var);
    };

    mean_std([](const MetricsReport& r) { return r.acc; }, agg.mean.acc, agg.stddev.acc);
    mean_std([](const MetricsReport& r) { return r.f1; }, agg.mean.f1, agg.stddev.f1);
    mean_std([](const MetricsReport& r) { return r.dp_diff; }, agg.mean.dp_diff,
             agg.stddev.dp_diff);
    mean_std([](const MetricsReport& r) { return r.eo_diff; }, agg.mean.eo_diff,
             agg.stddev.eo_diff);
    for (int s = 0; s < 2; ++s) {
        mean_std([s](const MetricsReport& r) { return r.pos_rate[s]; }, agg.mean.pos_rate[s],
                 agg.stddev.pos_rate[s]);
        mean_std([s](const MetricsReport& r) { return r.tpr[s]; }, agg.mean.tpr[s],
                 agg.stddev.tpr[s]);
    }

    bool all_auc = std::all_of(reports.begin(), reports.end(),
                               [](const MetricsReport& r) { return r.auc.has_value(); });
    if (all_auc) {
        double m, s;
        mean_std([](const MetricsReport& r) { return *r.auc; }, m, s);
        agg.mean.auc = m;
        agg.stddev.auc = s;
    }
    agg.mean.n_eval = reports.front().n_eval;
    return agg;
}

std::string MetricsReport::to_json() const {
    json j;
    j["acc"] = acc;
    j["f1"] = f1;
    if (auc)
        j["auc"] = *auc;
    else
        j["auc"] = nullptr;
    j["dp_diff"] = dp_diff;
    j["eo_diff"] = eo_diff;
    j["pos_rate"] = {pos_rate[0], pos_rate[1]};
    j["tpr"] = {tpr[0], tpr[1]};
    j["n_eval"] = n_eval;
    j["seed"] = seed;
    return j.dump();
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed metrics JSON: ") + e.what());
    }
    MetricsReport r;
    r.acc = j.at("acc").get<double>();
    r.f1 = j.at("f1").get<double>();
    if (j.contains("auc") && !j.at("auc").is_null()) r.auc = j.at("auc").get<double>();
    r.dp_diff = j.at("dp_diff").get<double>();
    r.eo_diff = j.at("eo_diff").get<double>();
    r.pos_rate[0] = j.at("pos_rate").at(0).get<double>();
    r.pos_rate[1] = j.at("pos_rate").at(1).get<double>();
    r.tpr[0] = j.at("tpr").at(0).get<double>();
    r.tpr[1] = j.at("tpr").at(1).get<double>();
    r.n_eval = j.at("n_eval").get<int>();
    r.seed = j.at("seed").get<uint64_t>();
    return r;
}

}  // namespace fairmib
