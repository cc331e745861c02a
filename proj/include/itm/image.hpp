#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "itm/errors.hpp"

namespace itm {

// Rec. 709 luma coefficients, applied to linear-light values.
inline constexpr double kLumaR = 0.2126;
inline constexpr double kLumaG = 0.7152;
inline constexpr double kLumaB = 0.0722;

// Default floor guarding log(0) in geometric means.
inline constexpr double kDefaultEps = 1e-6;

// Single-channel non-negative map (per-pixel luminance, exposure, ...).
struct LumaMap {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    LumaMap() = default;
    LumaMap(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    std::size_t size() const { return data.size(); }
    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

namespace detail {

// Shared storage for interleaved RGB images.
struct Rgb {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // r,g,b interleaved, row-major

    Rgb() = default;
    Rgb(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
    double* px(int x, int y) { return &data[(static_cast<std::size_t>(y) * width + x) * 3]; }
    const double* px(int x, int y) const {
        return &data[(static_cast<std::size_t>(y) * width + x) * 3];
    }
    double& at(int x, int y, int c) { return px(x, y)[c]; }
    double at(int x, int y, int c) const { return px(x, y)[c]; }
};

}  // namespace detail

// Linear-luminance HDR color image. Values are non-negative and finite,
// treated as relative cd/m^2.
struct RadianceMap : detail::Rgb {
    using detail::Rgb::Rgb;

    void validate(const std::string& what = "RadianceMap") const {
        if (width < 1 || height < 1)
            throw DimensionError(what + ": empty image");
        for (double v : data)
            if (!(v >= 0.0) || !std::isfinite(v))
                throw DomainError(what + ": values must be >= 0 and finite");
    }
};

// Display-referred color image, values in [0, 1]. `quantized` marks data
// known to be exact multiples of 1/255.
struct LdrImage : detail::Rgb {
    bool quantized = false;

    LdrImage() = default;
    LdrImage(int w, int h, double fill = 0.0) : detail::Rgb(w, h, fill) {}

    void validate(const std::string& what = "LdrImage") const {
        if (width < 1 || height < 1)
            throw DimensionError(what + ": empty image");
        for (double v : data)
            if (!(v >= 0.0 && v <= 1.0))
                throw DomainError(what + ": values must lie in [0, 1]");
    }
};

// Per-pixel Rec. 709 luminance.
template <class Img>
inline LumaMap luminance(const Img& img) {
    LumaMap out(img.width, img.height);
    const std::size_t n = img.pixels();
    for (std::size_t i = 0; i < n; ++i) {
        const double* p = &img.data[i * 3];
        out.data[i] = kLumaR * p[0] + kLumaG * p[1] + kLumaB * p[2];
    }
    return out;
}

// exp of the mean log-luminance, with values floored at eps before the
// log so zero pixels stay finite.
inline double geometric_mean(const LumaMap& L, double eps = kDefaultEps) {
    if (!(eps > 0.0))
        throw DomainError("geometric_mean: eps must be > 0");
    if (L.data.empty())
        throw DimensionError("geometric_mean: empty map");
    double acc = 0.0;
    for (double v : L.data)
        acc += std::log(std::max(v, eps));
    return std::exp(acc / static_cast<double>(L.data.size()));
}

namespace detail {

template <class Img>
struct channel_range;

template <>
struct channel_range<RadianceMap> {
    static constexpr double lo = 0.0;
    static constexpr double hi = std::numeric_limits<double>::infinity();
};

template <>
struct channel_range<LdrImage> {
    static constexpr double lo = 0.0;
    static constexpr double hi = 1.0;
};

}  // namespace detail

// Moves an image from luminance old_luma to luminance new_luma while
// preserving per-pixel RGB ratios: out_c = src_c * new/old. Pixels with
// old_luma == 0 fall back to neutral gray at the new luminance. The
// result is clamped to Out's channel range.
template <class Out, class Src>
inline Out rescale_colors(const Src& src, const LumaMap& old_luma, const LumaMap& new_luma) {
    if (src.width != old_luma.width || src.height != old_luma.height ||
        src.width != new_luma.width || src.height != new_luma.height)
        throw DimensionError("rescale_colors: dimension mismatch");
    constexpr double lo = detail::channel_range<Out>::lo;
    constexpr double hi = detail::channel_range<Out>::hi;
    Out out(src.width, src.height);
    const std::size_t n = src.pixels();
    for (std::size_t i = 0; i < n; ++i) {
        const double* s = &src.data[i * 3];
        double* d = &out.data[i * 3];
        const double ol = old_luma.data[i];
        const double nl = new_luma.data[i];
        if (ol > 0.0) {
            const double k = nl / ol;
            for (int c = 0; c < 3; ++c)
                d[c] = std::clamp(s[c] * k, lo, hi);
        } else {
            const double g = std::clamp(nl, lo, hi);
            d[0] = d[1] = d[2] = g;
        }
    }
    return out;
}

// Quantizes an LDR image to exact 8-bit levels k/255.
inline LdrImage quantize8(const LdrImage& img) {
    LdrImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        double k = std::round(std::clamp(img.data[i], 0.0, 1.0) * 255.0);
        out.data[i] = k / 255.0;
    }
    out.quantized = true;
    return out;
}

}  // namespace itm
