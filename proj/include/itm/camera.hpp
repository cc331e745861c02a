#pragma once

#include <algorithm>
#include <cmath>

#include "itm/errors.hpp"
#include "itm/image.hpp"
#include "itm/rng.hpp"

namespace itm {

// Parametric sigmoidal camera response: eta sets the knee, gamma the
// exponent. Both must be positive for the curve to make sense.
struct CrfParams {
    double eta = 0.6;
    double gamma = 0.9;

    void validate() const {
        if (!(eta > 0.0) || !(gamma > 0.0))
            throw DomainError("CrfParams: eta and gamma must be > 0");
    }
};

// Exposure draw: offset v in stops and the derived shutter speed.
struct ExposureParams {
    double v = 0.0;        // in [-4, 4]
    double delta_t = 1.0;  // 0.18 * 2^v / G
};

inline ExposureParams make_exposure(double v, double G) {
    if (!(v >= -4.0 && v <= 4.0))
        throw DomainError("exposure offset v must lie in [-4, 4]");
    if (!(G > 0.0))
        throw DomainError("exposure: G must be > 0");
    return ExposureParams{v, 0.18 * std::exp2(v) / G};
}

// Exposure map X = delta_t * L with delta_t = 0.18 * 2^v / G(L). At
// v = 0 the exposed map's geometric mean lands on middle gray 0.18.
inline LumaMap sample_exposure(const RadianceMap& E_patch, double v, double eps = kDefaultEps) {
    LumaMap L = luminance(E_patch);
    ExposureParams ex = make_exposure(v, geometric_mean(L, eps));
    LumaMap out(L.width, L.height);
    for (std::size_t i = 0; i < L.data.size(); ++i)
        out.data[i] = ex.delta_t * L.data[i];
    return out;
}

// x = min((1+eta) X^gamma / (X^gamma + eta), 1); monotone, 0 at 0,
// clamped to 1 where the sigmoid overshoots.
inline LumaMap apply_crf(const LumaMap& X, const CrfParams& p) {
    p.validate();
    LumaMap out(X.width, X.height);
    for (std::size_t i = 0; i < X.data.size(); ++i) {
        const double xg = std::pow(X.data[i], p.gamma);
        out.data[i] = std::min((1.0 + p.eta) * xg / (xg + p.eta), 1.0);
    }
    return out;
}

// eta ~ N(0.6, var 0.1), gamma ~ N(0.9, var 0.1), each redrawn until
// positive. Variance 0.1 means sigma = sqrt(0.1) ~ 0.316, so negative
// draws are rare but real.
inline CrfParams sample_crf_params(Rng& rng) {
    const double sigma = std::sqrt(0.1);
    CrfParams p;
    do {
        p.eta = rng.normal(0.6, sigma);
    } while (!(p.eta > 0.0));
    do {
        p.gamma = rng.normal(0.9, sigma);
    } while (!(p.gamma > 0.0));
    return p;
}

}  // namespace itm
