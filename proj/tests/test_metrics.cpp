// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fairmib/metrics.hpp"
#include "fairmib/rng.hpp"

using namespace fairmib;

namespace {

// Brute-force counting oracles, kept deliberately dumb.
double dp_oracle(const std::vector<int>& pred, const std::vector<int>& s,
                 const std::vector<uint8_t>& mask) {
    double pos[2] = {0, 0}, cnt[2] = {0, 0};
    for (size_t i = 0; i < pred.size(); ++i)
        if (mask[i]) {
            cnt[s[i]] += 1;
            pos[s[i]] += pred[i];
        }
    return std::abs(pos[0] / cnt[0] - pos[1] / cnt[1]);
}

double eo_oracle(const std::vector<int>& pred, const std::vector<int>& y,
                 const std::vector<int>& s, const std::vector<uint8_t>& mask) {
    double tp[2] = {0, 0}, cnt[2] = {0, 0};
    for (size_t i = 0; i < pred.size(); ++i)
        if (mask[i] && y[i] == 1) {
            cnt[s[i]] += 1;
            tp[s[i]] += pred[i];
        }
    return std::abs(tp[0] / cnt[0] - tp[1] / cnt[1]);
}

// O(n^2) pairwise rank statistic with half-credit ties.
double auc_oracle(const std::vector<double>& prob, const std::vector<int>& y,
                  const std::vector<uint8_t>& mask) {
    double wins = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i < prob.size(); ++i) {
        if (!mask[i] || y[i] != 1) continue;
        for (size_t j = 0; j < prob.size(); ++j) {
            if (!mask[j] || y[j] != 0) continue;
            ++pairs;
            if (prob[i] > prob[j])
                wins += 1.0;
            else if (prob[i] == prob[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("binarize") {
    CHECK(binarize({0.5})[0] == 1);  // tie goes positive
    auto p = binarize({0.2, 0.8});
    CHECK(p[0] == 0);
    CHECK(p[1] == 1);
    for (int v : binarize({0.0, 0.3, 1.0}, 0.0)) CHECK(v == 1);
}

TEST_CASE("demographic_parity_diff") {
    SUBCASE("hand-counted 8-node case: 2/4 vs 3/4") {
        std::vector<int> pred{1, 1, 0, 0, 1, 1, 1, 0};
        std::vector<int> s{0, 0, 0, 0, 1, 1, 1, 1};
        std::vector<uint8_t> mask(8, 1);
        CHECK(demographic_parity_diff(pred, s, mask) == doctest::Approx(0.25).epsilon(1e-15));
        CHECK(demographic_parity_diff(pred, s, mask) ==
              doctest::Approx(dp_oracle(pred, s, mask)).epsilon(1e-15));
    }
    SUBCASE("identical group rates give zero") {
        std::vector<int> pred{1, 0, 1, 0};
        std::vector<int> s{0, 0, 1, 1};
        CHECK(demographic_parity_diff(pred, s, {1, 1, 1, 1}) == 0.0);
    }
    SUBCASE("all-positive predictions give zero") {
        std::vector<int> pred{1, 1, 1, 1};
        std::vector<int> s{0, 1, 0, 1};
        CHECK(demographic_parity_diff(pred, s, {1, 1, 1, 1}) == 0.0);
    }
    SUBCASE("empty group names the group") {
        std::vector<int> pred{1, 0};
        std::vector<int> s{0, 0};
        CHECK_THROWS_WITH_AS(demographic_parity_diff(pred, s, {1, 1}),
                             doctest::Contains("s=1"), UndefinedMetricError);
    }
}

TEST_CASE("equal_opportunity_diff") {
    SUBCASE("hand case: TPRs 1/2 vs 3/4") {
        //            y=1 nodes: s0: {1,0}  s1: {1,1,1,0}
        std::vector<int> y{1, 1, 1, 1, 1, 1, 0, 0};
        std::vector<int> s{0, 0, 1, 1, 1, 1, 0, 1};
        std::vector<int> pred{1, 0, 1, 1, 1, 0, 1, 0};
        std::vector<uint8_t> mask(8, 1);
        CHECK(equal_opportunity_diff(pred, y, s, mask) == doctest::Approx(0.25).epsilon(1e-15));
        CHECK(equal_opportunity_diff(pred, y, s, mask) ==
              doctest::Approx(eo_oracle(pred, y, s, mask)).epsilon(1e-15));
    }
    SUBCASE("perfect classifier gives zero") {
        std::vector<int> y{1, 0, 1, 0};
        std::vector<int> s{0, 0, 1, 1};
        CHECK(equal_opportunity_diff(y, y, s, {1, 1, 1, 1}) == 0.0);
    }
    SUBCASE("swapping the group encoding leaves the value unchanged") {
        Rng rng(21);
        std::vector<int> y(20), s(20), pred(20);
        std::vector<uint8_t> mask(20, 1);
        for (int i = 0; i < 20; ++i) {
            y[i] = i < 10;  // both groups get positives
            s[i] = i % 2;
            pred[i] = rng.uniform() < 0.5;
        }
        std::vector<int> flipped(20);
        for (int i = 0; i < 20; ++i) flipped[i] = 1 - s[i];
        CHECK(equal_opportunity_diff(pred, y, s, mask) ==
              equal_opportunity_diff(pred, y, flipped, mask));
    }
    SUBCASE("group without positives is undefined") {
        std::vector<int> y{1, 0};
        std::vector<int> s{0, 1};
        CHECK_THROWS_AS(equal_opportunity_diff({1, 1}, y, s, {1, 1}), UndefinedMetricError);
    }
}

TEST_CASE("utility_metrics") {
    SUBCASE("perfect predictions") {
        std::vector<double> prob{0.9, 0.1, 0.8, 0.2};
        std::vector<int> y{1, 0, 1, 0};
        UtilityMetrics u = utility_metrics(prob, binarize(prob), y, {1, 1, 1, 1});
        CHECK(u.acc == 1.0);
        CHECK(u.f1 == 1.0);
        CHECK(*u.auc == 1.0);
    }
    SUBCASE("constant probabilities on balanced labels give AUC 1/2") {
        std::vector<double> prob(6, 0.5);
        std::vector<int> y{1, 0, 1, 0, 1, 0};
        UtilityMetrics u = utility_metrics(prob, binarize(prob), y, std::vector<uint8_t>(6, 1));
        CHECK(*u.auc == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("6-node hand case matches the pairwise oracle") {
        std::vector<double> prob{0.9, 0.3, 0.5, 0.5, 0.2, 0.7};
        std::vector<int> y{1, 0, 1, 0, 0, 1};
        std::vector<uint8_t> mask(6, 1);
        UtilityMetrics u = utility_metrics(prob, binarize(prob), y, mask);
        CHECK(*u.auc == doctest::Approx(auc_oracle(prob, y, mask)).epsilon(1e-15));
    }
    SUBCASE("single-class mask leaves auc absent, acc/f1 valid") {
        std::vector<double> prob{0.9, 0.4};
        std::vector<int> y{1, 1};
        UtilityMetrics u = utility_metrics(prob, binarize(prob), y, {1, 1});
        CHECK_FALSE(u.auc.has_value());
        CHECK(u.acc == 0.5);
        CHECK(u.f1 > 0.0);
    }
}

TEST_CASE("metric oracle equivalence on random prediction sets") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 20;
        std::vector<double> prob(n);
        std::vector<int> y(n), s(n);
        std::vector<uint8_t> mask(n);
        // quantized probabilities force plenty of AUC ties
        for (int i = 0; i < n; ++i) {
            prob[i] = static_cast<double>(rng.bounded(11)) / 10.0;
            y[i] = i < n / 2 ? 1 : 0;
            s[i] = i % 2;
            mask[i] = rng.uniform() < 0.8;
        }
        // make the metrics well defined
        mask[0] = mask[1] = mask[n - 1] = mask[n - 2] = 1;
        y[0] = y[1] = 1;
        s[0] = 0;
        s[1] = 1;
        y[n - 1] = y[n - 2] = 0;
        s[n - 1] = 0;
        s[n - 2] = 1;

        auto pred = binarize(prob);
        CHECK(demographic_parity_diff(pred, s, mask) == dp_oracle(pred, s, mask));
        CHECK(equal_opportunity_diff(pred, y, s, mask) == eo_oracle(pred, y, s, mask));
        UtilityMetrics u = utility_metrics(prob, pred, y, mask);
        REQUIRE(u.auc.has_value());
        CHECK(*u.auc == doctest::Approx(auc_oracle(prob, y, mask)).epsilon(1e-12));
        // accuracy against direct counting
        int correct = 0, total = 0;
        for (int i = 0; i < n; ++i)
            if (mask[i]) {
                ++total;
                correct += pred[i] == y[i];
            }
        CHECK(u.acc == static_cast<double>(correct) / total);
    }
}

TEST_CASE("metric invariance properties") {
    Rng rng(88);
    const int n = 30;
    std::vector<double> prob(n);
    std::vector<int> y(n), s(n);
    std::vector<uint8_t> mask(n, 1);
    for (int i = 0; i < n; ++i) {
        prob[i] = rng.uniform();
        y[i] = rng.uniform() < 0.5;
        s[i] = rng.uniform() < 0.5;
    }
    y[0] = y[1] = 1;
    s[0] = 0;
    s[1] = 1;
    auto pred = binarize(prob);

    SUBCASE("node reordering leaves fairness metrics unchanged") {
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i;
        rng.shuffle(perm);
        std::vector<double> prob2(n);
        std::vector<int> y2(n), s2(n), pred2(n);
        for (int i = 0; i < n; ++i) {
            prob2[i] = prob[perm[i]];
            y2[i] = y[perm[i]];
            s2[i] = s[perm[i]];
            pred2[i] = pred[perm[i]];
        }
        CHECK(demographic_parity_diff(pred, s, mask) ==
              doctest::Approx(demographic_parity_diff(pred2, s2, mask)).epsilon(1e-15));
        CHECK(equal_opportunity_diff(pred, y, s, mask) ==
              doctest::Approx(equal_opportunity_diff(pred2, y2, s2, mask)).epsilon(1e-15));
    }
    SUBCASE("masked-out nodes are ignored") {
        std::vector<uint8_t> partial = mask;
        for (int i = 5; i < 12; ++i) partial[i] = 0;
        auto altered = pred;
        for (int i = 5; i < 12; ++i) altered[i] = 1 - altered[i];
        CHECK(demographic_parity_diff(pred, s, partial) ==
              demographic_parity_diff(altered, s, partial));
        auto prob_altered = prob;
        for (int i = 5; i < 12; ++i) prob_altered[i] = 1.0 - prob_altered[i];
        UtilityMetrics a = utility_metrics(prob, pred, y, partial);
        UtilityMetrics b = utility_metrics(prob_altered, altered, y, partial);
        CHECK(a.acc == b.acc);
        CHECK(*a.auc == *b.auc);
    }
    SUBCASE("AUC of p and 1-p sum to one") {
        std::vector<double> flipped(n);
        for (int i = 0; i < n; ++i) flipped[i] = 1.0 - prob[i];
        UtilityMetrics a = utility_metrics(prob, pred, y, mask);
        UtilityMetrics b = utility_metrics(flipped, binarize(flipped), y, mask);
        CHECK(*a.auc + *b.auc == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("aggregate") {
    MetricsReport a, b;
    a.acc = 0.6;
    b.acc = 0.8;
    a.auc = 0.7;
    b.auc = 0.9;
    a.dp_diff = 0.1;
    b.dp_diff = 0.3;

    SUBCASE("identical reports have zero std") {
        MetricsAggregate agg = aggregate({a, a, a});
        CHECK(agg.mean.acc == doctest::Approx(0.6).epsilon(1e-15));
        CHECK(agg.stddev.acc == 0.0);
    }
    SUBCASE("two-point formula") {
        MetricsAggregate agg = aggregate({a, b});
        CHECK(agg.mean.acc == doctest::Approx(0.7).epsilon(1e-12));
        CHECK(agg.stddev.acc == doctest::Approx(std::sqrt(0.02)).epsilon(1e-9));
        CHECK(agg.stddev.acc == doctest::Approx(0.1414).epsilon(1e-3));
    }
    SUBCASE("single report has zero std") {
        MetricsAggregate agg = aggregate({a});
        CHECK(agg.stddev.acc == 0.0);
        CHECK(agg.count == 1);
    }
    SUBCASE("five random reports match a direct recomputation") {
        Rng rng(31);
        std::vector<MetricsReport> reports(5);
        for (auto& r : reports) {
            r.acc = rng.uniform();
            r.f1 = rng.uniform();
            r.auc = rng.uniform();
            r.dp_diff = rng.uniform();
            r.eo_diff = rng.uniform();
        }
        MetricsAggregate agg = aggregate(reports);
        double mean = 0, var = 0;
        for (const auto& r : reports) mean += r.dp_diff;
        mean /= 5;
        for (const auto& r : reports) var += (r.dp_diff - mean) * (r.dp_diff - mean);
        var /= 4;
        CHECK(agg.mean.dp_diff == doctest::Approx(mean).epsilon(1e-12));
        CHECK(agg.stddev.dp_diff == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
    }
    SUBCASE("json round trip") {
        a.seed = 17;
        a.n_eval = 50;
        MetricsReport r = MetricsReport::from_json(a.to_json());
        CHECK(r.acc == a.acc);
        CHECK(*r.auc == *a.auc);
        CHECK(r.seed == 17);
        MetricsReport no_auc;
        no_auc.auc = std::nullopt;
        CHECK_FALSE(MetricsReport::from_json(no_auc.to_json()).auc.has_value());
    }
}
