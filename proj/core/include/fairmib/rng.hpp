// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fairmib/matrix.hpp"

namespace fairmib {

// Seeded random source with a platform-stable stream. mt19937_64 output is
// fully specified by the standard; the uniform and normal transforms below are
// done by hand because the std distribution objects are implementation-defined
// and would break cross-platform reproducibility of seeded runs.
class Rng {
  public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; generates pairs, caches the second.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    // Uniform integer in [0, n). Rejection sampling keeps the stream unbiased
    // and deterministic across platforms.
    uint64_t bounded(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = engine_();
            if (r >= threshold) return r % n;
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    Matrix normal_matrix(int r, int c, double scale = 1.0) {
        Matrix m(r, c);
        for (auto& v : m.data) v = scale * normal();
        return m;
    }

    Matrix uniform_matrix(int r, int c, double lo, double hi) {
        Matrix m(r, c);
        for (auto& v : m.data) v = lo + (hi - lo) * uniform();
        return m;
    }

  private:
    std::mt19937_64 engine_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace fairmib
