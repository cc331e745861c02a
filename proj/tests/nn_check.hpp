#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "itm/nn/layers.hpp"
#include "itm/nn/tensor.hpp"
#include "itm/rng.hpp"

// Central finite-difference verification of layer backward passes, run
// in double precision. The scalar probe is a fixed random weighting of
// the layer output, so its gradient w.r.t. the output is exactly the
// weight tensor and one backward() call yields every analytic slope.
namespace nncheck {

using itm::nn::Tensor;

inline void fill_uniform(Tensor<double>& t, itm::Rng& rng, double lo = -1.0, double hi = 1.0) {
    for (auto& v : t.data) v = rng.uniform(lo, hi);
}

inline double rel_gap(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

// Compares analytic gradients of `layer` (input gradient plus any
// parameter gradients) against central differences. `params` and
// `grads` are matching lists of parameter tensors and their gradient
// accumulators. Returns the worst relative gap over every element.
template <class Layer>
double check_layer(Layer& layer, Tensor<double> x, std::vector<Tensor<double>*> params,
                   std::vector<Tensor<double>*> grads, itm::Rng& rng, double h = 1e-5) {
    Tensor<double> probe = layer.forward(x, true);
    fill_uniform(probe, rng);

    auto loss = [&]() {
        Tensor<double> y = layer.forward(x, true);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += probe.data[i] * y.data[i];
        return s;
    };

    for (auto* g : grads) g->fill(0.0);
    (void)layer.forward(x, true);
    Tensor<double> gx = layer.backward(probe);
    std::vector<Tensor<double>> saved_grads;
    saved_grads.reserve(grads.size());
    for (auto* g : grads) saved_grads.push_back(*g);

    double worst = 0.0;
    auto probe_slot = [&](double* v, double analytic) {
        const double orig = *v;
        *v = orig + h;
        const double lp = loss();
        *v = orig - h;
        const double lm = loss();
        *v = orig;
        worst = std::max(worst, rel_gap(analytic, (lp - lm) / (2.0 * h)));
    };

    for (std::size_t i = 0; i < x.size(); ++i) probe_slot(&x.data[i], gx.data[i]);
    for (std::size_t p = 0; p < params.size(); ++p)
        for (std::size_t i = 0; i < params[p]->size(); ++i)
            probe_slot(&params[p]->data[i], saved_grads[p].data[i]);
    return worst;
}

// mse_loss has no layer wrapper; checked directly against its grad.
inline double check_mse(Tensor<double> pred, const Tensor<double>& target, double h = 1e-5) {
    Tensor<double> g = itm::nn::mse_grad(pred, target);
    double worst = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double orig = pred.data[i];
        pred.data[i] = orig + h;
        const double lp = itm::nn::mse_loss(pred, target);
        pred.data[i] = orig - h;
        const double lm = itm::nn::mse_loss(pred, target);
        pred.data[i] = orig;
        worst = std::max(worst, rel_gap(g.data[i], (lp - lm) / (2.0 * h)));
    }
    return worst;
}

}  // namespace nncheck
