#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>

#include "itm/errors.hpp"
#include "itm/image.hpp"

namespace itm {

// Half an 8-bit quantization step. Luminance is clamped to 1 - this
// before inversion so white pixels stay finite.
inline constexpr double kSaturationDelta = 1.0 / 512.0;

// Parameters of the global photographic operator.
struct ToneParams {
    double a = 0.18;   // key value, in (0, 1]
    double G = 1.0;    // geometric mean of the HDR luminance
    double eps = kDefaultEps;

    void validate() const {
        if (!(a > 0.0 && a <= 1.0))
            throw DomainError("ToneParams: a must lie in (0, 1]");
        if (!(G > 0.0))
            throw DomainError("ToneParams: G must be > 0");
        if (!(eps > 0.0))
            throw DomainError("ToneParams: eps must be > 0");
    }
};

// Pixel counts used by the scale-recovery formula.
struct ZeroPartition {
    std::size_t n_total = 0;
    std::size_t n_zero = 0;     // pixels with I = 0
    std::size_t n_nonzero = 0;  // the rest
};

namespace detail {

inline void check_key(double a) {
    if (!(a > 0.0 && a <= 1.0))
        throw DomainError("key value a must lie in (0, 1]");
}

}  // namespace detail

// Global tone curve I = X / (1 + X) applied to the scaled luminance
// X = (a / G) L, with colors carried along at fixed RGB ratios. The
// output is unquantized; an all-zero image maps to all zeros.
inline std::pair<LdrImage, ToneParams> tonemap_forward(const RadianceMap& E, double a = 0.18,
                                                       double eps = kDefaultEps) {
    detail::check_key(a);
    E.validate();
    LumaMap L = luminance(E);
    ToneParams params{a, geometric_mean(L, eps), eps};
    LumaMap mapped(L.width, L.height);
    const double s = params.a / params.G;
    for (std::size_t i = 0; i < L.data.size(); ++i) {
        const double x = s * L.data[i];
        mapped.data[i] = x / (1.0 + x);
    }
    LdrImage out = rescale_colors<LdrImage>(E, L, mapped);
    return {std::move(out), params};
}

// X' = I / (1 - I); exact inverse of the tone curve on [0, 1).
inline double inverse_curve(double I) {
    if (!(I >= 0.0 && I < 1.0))
        throw DomainError("inverse_curve: input must lie in [0, 1)");
    return I / (1.0 - I);
}

// Recovers the geometric mean of the original HDR luminance from a
// tone-mapped luma map and the key value alone. Requires at least one
// zero pixel: without one the inverted map's geometric mean is locked to
// a and carries no scale information.
inline std::pair<double, ZeroPartition> recover_G(const LumaMap& I_luma, double a = 0.18,
                                                  double eps = kDefaultEps) {
    detail::check_key(a);
    ZeroPartition part;
    part.n_total = I_luma.data.size();
    LumaMap inv(I_luma.width, I_luma.height);
    for (std::size_t i = 0; i < I_luma.data.size(); ++i) {
        const double v = I_luma.data[i];
        if (v == 0.0) {
            ++part.n_zero;
            inv.data[i] = 0.0;
        } else {
            inv.data[i] = inverse_curve(v);
        }
    }
    part.n_nonzero = part.n_total - part.n_zero;
    if (part.n_zero == 0)
        throw ScaleUnrecoverableError(
            "recover_G: no zero pixels; absolute scale is unrecoverable "
            "(supply g_override to invert with a known geometric mean)");
    const double g_inv = geometric_mean(inv, eps);
    const double n = static_cast<double>(part.n_total);
    const double nz = static_cast<double>(part.n_zero);
    const double nnz = static_cast<double>(part.n_nonzero);
    const double G = std::exp((n / nz) * std::log(g_inv) - (nnz / nz) * std::log(a));
    return {G, part};
}

// Full inverse result, for callers that want the recovered parameters.
struct InverseResult {
    RadianceMap hdr;
    ToneParams params;        // a, recovered (or overridden) G, eps
    ZeroPartition partition;  // counts when recovery ran; totals otherwise
    bool g_overridden = false;
};

// Inverse of the global operator. Luminance is clamped to 1 - 1/512
// before the curve inversion; pixels with luma <= zero_threshold are
// treated as exact zeros (threshold 0 means literal zeros only). G is
// recovered from the zero set unless g_override is supplied.
inline InverseResult inverse_tonemap_detail(const LdrImage& I, double a = 0.18,
                                            double eps = kDefaultEps,
                                            std::optional<double> g_override = std::nullopt,
                                            double zero_threshold = 0.0) {
    detail::check_key(a);
    I.validate();
    LumaMap L = luminance(I);
    LumaMap prepared(L.width, L.height);
    for (std::size_t i = 0; i < L.data.size(); ++i) {
        const double v = L.data[i];
        prepared.data[i] = (v <= zero_threshold) ? 0.0 : std::min(v, 1.0 - kSaturationDelta);
    }

    InverseResult res;
    if (g_override) {
        if (!(*g_override > 0.0))
            throw DomainError("inverse_tonemap: g_override must be > 0");
        res.params = ToneParams{a, *g_override, eps};
        res.g_overridden = true;
        res.partition.n_total = L.data.size();
        for (double v : prepared.data)
            if (v == 0.0) ++res.partition.n_zero;
        res.partition.n_nonzero = res.partition.n_total - res.partition.n_zero;
    } else {
        auto [G, part] = recover_G(prepared, a, eps);
        res.params = ToneParams{a, G, eps};
        res.partition = part;
    }

    LumaMap hdr_luma(L.width, L.height);
    const double s = res.params.G / res.params.a;
    for (std::size_t i = 0; i < prepared.data.size(); ++i)
        hdr_luma.data[i] = s * inverse_curve(prepared.data[i]);
    res.hdr = rescale_colors<RadianceMap>(I, L, hdr_luma);
    return res;
}

inline RadianceMap inverse_tonemap(const LdrImage& I, double a = 0.18, double eps = kDefaultEps,
                                   std::optional<double> g_override = std::nullopt,
                                   double zero_threshold = 0.0) {
    return inverse_tonemap_detail(I, a, eps, g_override, zero_threshold).hdr;
}

}  // namespace itm
