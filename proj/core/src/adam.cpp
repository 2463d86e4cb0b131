// SPDX-License-Identifier: Apache-2.0
#include "fairmib/adam.hpp"

#include <cmath>

#include "fairmib/errors.hpp"

namespace fairmib {

void AdamState::step(ParamStore& params, const GradStore& grads) {
    for (const auto& [name, g] : grads) {
        if (!g.all_finite())
            throw NumericError("adam: non-finite gradient for parameter '" + name + "'");
        auto it = params.find(name);
        if (it == params.end())
            throw StateError("adam: gradient for unknown parameter '" + name + "'");
        if (!it->second.same_shape(g))
            throw DimensionError("adam: parameter '" + name + "' has shape " +
                                 it->second.shape_str() + " but gradient is " + g.shape_str());
    }

    ++step_count_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));

    for (auto& [name, p] : params) {
        Matrix& m = m_.try_emplace(name, p.rows, p.cols).first->second;
        Matrix& v = v_.try_emplace(name, p.rows, p.cols).first->second;
        auto git = grads.find(name);
        for (int64_t i = 0; i < p.size(); ++i) {
            const double g = git != grads.end() ? git->second.data[i] : 0.0;
            m.data[i] = b1 * m.data[i] + (1.0 - b1) * g;
            v.data[i] = b2 * v.data[i] + (1.0 - b2) * g * g;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
}

}  // namespace fairmib
