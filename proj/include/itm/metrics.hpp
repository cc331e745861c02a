#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "itm/errors.hpp"
#include "itm/image.hpp"

namespace itm {

constexpr double kPuLMin = 1e-5;   // cd/m^2
constexpr double kPuLMax = 1e10;
constexpr double kPuAnchorLo = 0.1;   // maps to code value 0
constexpr double kPuAnchorHi = 80.0;  // maps to code value 255

namespace detail {

// Threshold-versus-intensity curves (log10 threshold vs log10
// adaptation luminance, cd/m^2), cone and rod branches.
inline double tvi_photopic_log10(double x) {
    if (x <= -2.6) return -0.72;
    if (x >= 1.9) return x - 1.255;
    return std::pow(0.249 * x + 0.65, 2.7) - 0.72;
}

inline double tvi_scotopic_log10(double x) {
    if (x <= -3.94) return -2.86;
    if (x >= -1.44) return x - 0.395;
    return std::pow(0.405 * x + 1.6, 2.18) - 2.86;
}

// Detection threshold at adaptation luminance L: the more sensitive of
// the two receptor systems.
inline double tvi(double L) {
    const double x = std::log10(L);
    return std::min(std::pow(10.0, tvi_photopic_log10(x)),
                    std::pow(10.0, tvi_scotopic_log10(x)));
}

}  // namespace detail

// Perceptually uniform luminance encoding: accumulated discrimination
// thresholds, i.e. the integral of dL / T(L), tabulated on a log10
// grid and interpolated linearly in log10 L. The affine calibration
// puts 0.1 cd/m^2 at code 0 and 80 cd/m^2 at code 255. Strictly
// increasing on [1e-5, 1e10] by construction (positive integrand).
class PuCurve {
public:
    PuCurve(double t_min = -5.0, double t_max = 10.0, int knots_per_decade = 10)
        : t_min_(t_min), t_max_(t_max) {
        const int n = static_cast<int>(std::lround((t_max - t_min) * knots_per_decade)) + 1;
        step_ = (t_max - t_min) / (n - 1);
        raw_.resize(static_cast<std::size_t>(n));
        raw_[0] = 0.0;
        auto f = [](double t) {
            const double L = std::pow(10.0, t);
            return std::log(10.0) * L / detail::tvi(L);
        };
        for (int k = 1; k < n; ++k) {
            const double a = t_min + (k - 1) * step_;
            const double b = t_min + k * step_;
            const double mid = 0.5 * (a + b);
            raw_[static_cast<std::size_t>(k)] =
                raw_[static_cast<std::size_t>(k - 1)] +
                (b - a) / 6.0 * (f(a) + 4.0 * f(mid) + f(b));
        }
        const double lo = raw_at(std::log10(kPuAnchorLo));
        const double hi = raw_at(std::log10(kPuAnchorHi));
        scale_ = 255.0 / (hi - lo);
        offset_ = -scale_ * lo;
    }

    double encode(double L) const {
        double t = std::log10(std::min(std::max(L, std::pow(10.0, t_min_)),
                                       std::pow(10.0, t_max_)));
        return scale_ * raw_at(t) + offset_;
    }

    LumaMap encode(const LumaMap& L) const {
        LumaMap out(L.width, L.height);
        for (std::size_t i = 0; i < L.data.size(); ++i) out.data[i] = encode(L.data[i]);
        return out;
    }

    // full span of the code-value axis; the dynamic range handed to
    // SSIM when scoring PU-encoded luminances
    double range() const { return encode(std::pow(10.0, t_max_)) - encode(std::pow(10.0, t_min_)); }

    static const PuCurve& instance() {
        static const PuCurve curve;
        return curve;
    }

private:
    double raw_at(double t) const {
        const double u = (t - t_min_) / step_;
        const int k = std::min(static_cast<int>(u), static_cast<int>(raw_.size()) - 2);
        const double w = u - k;
        return (1.0 - w) * raw_[static_cast<std::size_t>(k)] +
               w * raw_[static_cast<std::size_t>(k + 1)];
    }

    double t_min_, t_max_, step_;
    double scale_ = 1.0, offset_ = 0.0;
    std::vector<double> raw_;
};

inline double pu_encode(double L) { return PuCurve::instance().encode(L); }

inline LumaMap pu_encode(const LumaMap& L) { return PuCurve::instance().encode(L); }

// ---- SSIM family ----

namespace detail {

inline std::vector<double> gaussian_window11() {
    std::vector<double> w(11);
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double d = i - 5;
        w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
}

// Separable weighted local means over valid (unpadded) windows.
inline LumaMap window_filter(const LumaMap& img, const std::vector<double>& w) {
    const int k = static_cast<int>(w.size());
    LumaMap tmp(img.width - k + 1, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < tmp.width; ++x) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += w[static_cast<std::size_t>(i)] * img.at(x + i, y);
            tmp.at(x, y) = s;
        }
    }
    LumaMap out(tmp.width, img.height - k + 1);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += w[static_cast<std::size_t>(i)] * tmp.at(x, y + i);
            out.at(x, y) = s;
        }
    }
    return out;
}

inline LumaMap elem_mul(const LumaMap& a, const LumaMap& b) {
    LumaMap out(a.width, a.height);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
    return out;
}

// 2x2 mean then decimation; trailing odd row/column dropped.
inline LumaMap downsample2(const LumaMap& img) {
    LumaMap out(img.width / 2, img.height / 2);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.at(x, y) = 0.25 * (img.at(2 * x, 2 * y) + img.at(2 * x + 1, 2 * y) +
                                   img.at(2 * x, 2 * y + 1) + img.at(2 * x + 1, 2 * y + 1));
    return out;
}

struct SsimTerms {
    double full;  // mean SSIM (luminance * contrast/structure)
    double cs;    // mean contrast/structure term alone
};

inline SsimTerms ssim_terms(const LumaMap& a, const LumaMap& b, double dynamic_range) {
    if (a.width != b.width || a.height != b.height)
        throw DimensionError("ssim: image sizes differ");
    if (a.width < 11 || a.height < 11)
        throw DimensionError("ssim: images must be at least 11x11, got " +
                             std::to_string(a.width) + "x" + std::to_string(a.height));
    if (!(dynamic_range > 0.0)) throw DomainError("ssim: dynamic range must be positive");
    const auto w = gaussian_window11();
    const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
    const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
    const LumaMap mu_a = window_filter(a, w);
    const LumaMap mu_b = window_filter(b, w);
    const LumaMap aa = window_filter(elem_mul(a, a), w);
    const LumaMap bb = window_filter(elem_mul(b, b), w);
    const LumaMap ab = window_filter(elem_mul(a, b), w);
    double full_sum = 0.0, cs_sum = 0.0;
    for (std::size_t i = 0; i < mu_a.data.size(); ++i) {
        const double ma = mu_a.data[i], mb = mu_b.data[i];
        const double va = aa.data[i] - ma * ma;
        const double vb = bb.data[i] - mb * mb;
        const double cov = ab.data[i] - ma * mb;
        const double cs = (2.0 * cov + c2) / (va + vb + c2);
        const double lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        cs_sum += cs;
        full_sum += lum * cs;
    }
    const double n = static_cast<double>(mu_a.data.size());
    return SsimTerms{full_sum / n, cs_sum / n};
}

}  // namespace detail

inline double ssim(const LumaMap& a, const LumaMap& b, double dynamic_range) {
    return detail::ssim_terms(a, b, dynamic_range).full;
}

struct MsSsimResult {
    double score = 0.0;
    std::vector<double> per_scale;  // cs means, full SSIM at the coarsest
    int scales_used = 0;
    bool reduced_scales = false;  // true when < 5 scales fit the input
};

// Five dyadic scales when the input allows: contrast/structure at the
// finer scales, full SSIM at the coarsest, combined with the standard
// exponents. Smaller inputs use fewer scales with the leading
// exponents renormalized to sum to one.
inline MsSsimResult ms_ssim_detail(const LumaMap& a, const LumaMap& b, double dynamic_range) {
    static const double kWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    if (a.width != b.width || a.height != b.height)
        throw DimensionError("ms_ssim: image sizes differ");
    int usable = 0;
    {
        int w = a.width, h = a.height;
        while (usable < 5 && w >= 11 && h >= 11) {
            ++usable;
            w /= 2;
            h /= 2;
        }
    }
    if (usable == 0)
        throw DimensionError("ms_ssim: images must be at least 11x11");
    double wsum = 0.0;
    for (int j = 0; j < usable; ++j) wsum += kWeights[j];
    MsSsimResult res;
    res.scales_used = usable;
    res.reduced_scales = usable < 5;
    LumaMap ca = a, cb = b;
    double score = 1.0;
    for (int j = 0; j < usable; ++j) {
        const auto terms = detail::ssim_terms(ca, cb, dynamic_range);
        // negative local structure would make the weighted geometric
        // mean undefined; clamp at zero
        const double m = std::max(j + 1 == usable ? terms.full : terms.cs, 0.0);
        res.per_scale.push_back(m);
        score *= std::pow(m, kWeights[j] / wsum);
        if (j + 1 < usable) {
            ca = detail::downsample2(ca);
            cb = detail::downsample2(cb);
        }
    }
    res.score = score;
    return res;
}

inline double ms_ssim(const LumaMap& a, const LumaMap& b, double dynamic_range) {
    return ms_ssim_detail(a, b, dynamic_range).score;
}

// ---- end-to-end quality ----

struct LumaStats {
    double min = 0.0, max = 0.0, mean = 0.0;
};

struct QualityReport {
    double pu_msssim = 0.0;
    std::vector<double> per_scale;
    int scales_used = 0;
    bool reduced_scales = false;
    LumaStats pred, ref;
};

namespace detail {

inline LumaStats luma_stats(const LumaMap& L) {
    LumaStats s;
    s.min = L.data[0];
    s.max = L.data[0];
    double sum = 0.0;
    for (double v : L.data) {
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
        sum += v;
    }
    s.mean = sum / static_cast<double>(L.data.size());
    return s;
}

}  // namespace detail

// Scores a reconstruction against its reference: luminances are PU
// encoded and compared with MS-SSIM over the code-value range.
inline QualityReport evaluate_hdr(const RadianceMap& pred, const RadianceMap& ref) {
    pred.validate("evaluate_hdr: prediction");
    ref.validate("evaluate_hdr: reference");
    if (pred.width != ref.width || pred.height != ref.height)
        throw DimensionError("evaluate_hdr: image sizes differ");
    const LumaMap lp = luminance(pred);
    const LumaMap lr = luminance(ref);
    const PuCurve& pu = PuCurve::instance();
    const MsSsimResult ms = ms_ssim_detail(pu.encode(lp), pu.encode(lr), pu.range());
    QualityReport rep;
    rep.pu_msssim = ms.score;
    rep.per_scale = ms.per_scale;
    rep.scales_used = ms.scales_used;
    rep.reduced_scales = ms.reduced_scales;
    rep.pred = detail::luma_stats(lp);
    rep.ref = detail::luma_stats(lr);
    return rep;
}

}  // namespace itm
