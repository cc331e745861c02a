#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "itm/errors.hpp"
#include "itm/nn/tensor.hpp"
#include "itm/rng.hpp"

namespace itm::nn {

// Draws every element of w from N(0, 2/fan_in). fan_in is passed
// explicitly (in_channels * kh * kw for convolutions).
template <class T>
void he_init(Tensor<T>& w, int fan_in, Rng& rng) {
    if (fan_in <= 0) throw DomainError("he_init: fan_in must be positive");
    const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : w.data) v = static_cast<T>(rng.normal(0.0, sigma));
}

struct AdamConfig {
    double alpha = 0.002;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment estimates for one parameter tensor. Moments are
// kept in double regardless of the parameter type.
struct AdamState {
    std::vector<double> m, v;
    std::int64_t t = 0;

    void ensure(std::size_t n) {
        if (m.empty()) {
            m.assign(n, 0.0);
            v.assign(n, 0.0);
        } else if (m.size() != n) {
            throw DimensionError("AdamState: parameter count changed");
        }
    }
};

// One bias-corrected Adam update. Leaves the gradient untouched;
// callers zero it between steps.
template <class T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState& st, const AdamConfig& cfg) {
    if (!param.same_shape(grad))
        throw DimensionError("adam_step: parameter/gradient shape mismatch");
    st.ensure(param.size());
    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = static_cast<double>(grad.data[i]);
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        param.data[i] = static_cast<T>(static_cast<double>(param.data[i]) -
                                       cfg.alpha * mhat / (std::sqrt(vhat) + cfg.eps));
    }
}

}  // namespace itm::nn
