// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "fairmib/matrix.hpp"

namespace fairmib {

// Named parameter collection. std::map keeps iteration order deterministic,
// which the seeded training loop relies on.
using ParamStore = std::map<std::string, Matrix>;
using GradStore = std::map<std::string, Matrix>;

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Moments are allocated on first sight of each
// parameter and must keep their shape afterwards.
class AdamState {
  public:
    explicit AdamState(AdamConfig config = {}) : config_(config) {}

    // One optimizer step over every (param, grad) pair. Missing grads leave
    // the parameter untouched but still decay its moments. Non-finite grads
    // abort the step with NumericError before any parameter is modified.
    void step(ParamStore& params, const GradStore& grads);

    long step_count() const { return step_count_; }
    const AdamConfig& config() const { return config_; }

  private:
    AdamConfig config_;
    std::map<std::string, Matrix> m_;
    std::map<std::string, Matrix> v_;
    long step_count_ = 0;
};

}  // namespace fairmib
