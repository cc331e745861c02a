#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "itm/reinhard.hpp"
#include "testutil.hpp"

namespace {

itm::RadianceMap gray_map(int w, int h, const std::vector<double>& luma) {
    itm::RadianceMap map(w, h);
    for (std::size_t i = 0; i < luma.size(); ++i)
        map.data[3 * i] = map.data[3 * i + 1] = map.data[3 * i + 2] = luma[i];
    return map;
}

TEST(TonemapForward, MidCurvePoint) {
    // Luminances {10, 0.324}: G = 1.8, so the first pixel has X = 1 and
    // must land exactly on the curve's midpoint 0.5.
    auto map = gray_map(2, 1, {10.0, 0.324});
    auto [ldr, params] = itm::tonemap_forward(map, 0.18);
    EXPECT_NEAR(params.G, 1.8, 1e-12);
    EXPECT_NEAR(itm::luminance(ldr).at(0, 0), 0.5, 1e-12);
    EXPECT_FALSE(ldr.quantized);
    EXPECT_NO_THROW(ldr.validate());
}

TEST(TonemapForward, OutputStaysBelowOne) {
    itm::Rng rng(3);
    auto map = testutil::random_radiance(rng, 32, 32, 1e-1, 1e3, 4);
    auto [ldr, params] = itm::tonemap_forward(map);
    for (double v : ldr.data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    EXPECT_GT(params.G, 0.0);
}

TEST(TonemapForward, AllZeroImageIsLegal) {
    itm::RadianceMap black(4, 4, 0.0);
    auto [ldr, params] = itm::tonemap_forward(black, 0.18, 1e-6);
    EXPECT_NEAR(params.G, 1e-6, 1e-18);
    for (double v : ldr.data) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(TonemapForward, RejectsBadKey) {
    auto map = gray_map(1, 1, {1.0});
    EXPECT_THROW(itm::tonemap_forward(map, 0.0), itm::DomainError);
    EXPECT_THROW(itm::tonemap_forward(map, 1.5), itm::DomainError);
}

TEST(InverseCurve, KnownPointAndDomain) {
    EXPECT_NEAR(itm::inverse_curve(0.9), 9.0, 1e-12);
    EXPECT_DOUBLE_EQ(itm::inverse_curve(0.0), 0.0);
    EXPECT_THROW(itm::inverse_curve(1.0), itm::DomainError);
    EXPECT_THROW(itm::inverse_curve(-0.1), itm::DomainError);
}

TEST(InverseCurve, BijectionUpToMillion) {
    for (double x = 0.0; x <= 1.0e6; x = (x == 0.0) ? 1e-6 : x * 1.7) {
        const double i = x / (1.0 + x);
        const double back = itm::inverse_curve(i);
        EXPECT_LE(testutil::rel_error(back, x), 1e-9) << "at X = " << x;
    }
}

TEST(RecoverG, AllZeroMapGivesEps) {
    itm::LumaMap zeros(3, 3, 0.0);
    auto [g, part] = itm::recover_G(zeros, 0.18, 1e-6);
    EXPECT_NEAR(g, 1e-6, 1e-18);
    EXPECT_EQ(part.n_zero, 9u);
    EXPECT_EQ(part.n_nonzero, 0u);
}

TEST(RecoverG, ZeroTestIsExact) {
    itm::LumaMap luma(2, 1);
    luma.data = {0.5, 1e-300};
    EXPECT_THROW(itm::recover_G(luma), itm::ScaleUnrecoverableError);
    luma.data = {0.5, 0.0};
    auto [g, part] = itm::recover_G(luma);
    (void)g;
    EXPECT_EQ(part.n_zero, 1u);
}

TEST(RecoverG, PermutationInvariant) {
    itm::Rng rng(17);
    auto map = testutil::random_radiance(rng, 8, 8, 1e-1, 1e2, 3);
    auto [ldr, params] = itm::tonemap_forward(map);
    itm::LumaMap luma = itm::luminance(ldr);
    auto [g0, p0] = itm::recover_G(luma);
    std::reverse(luma.data.begin(), luma.data.end());
    auto [g1, p1] = itm::recover_G(luma);
    EXPECT_LE(testutil::rel_error(g1, g0), 1e-12);
    EXPECT_EQ(p0.n_zero, p1.n_zero);
    (void)params;
}

TEST(RecoverG, MatchesForwardParams) {
    itm::Rng rng(5);
    auto map = testutil::random_radiance(rng, 24, 16, 1e-2, 1e2, 2);
    auto [ldr, params] = itm::tonemap_forward(map);
    auto [g, part] = itm::recover_G(itm::luminance(ldr), params.a, params.eps);
    EXPECT_LE(testutil::rel_error(g, params.G), 1e-10);
    EXPECT_EQ(part.n_zero, 2u);
}

TEST(InverseTonemap, RoundTripWithZeroPixels) {
    itm::Rng rng(29);
    for (int trial = 0; trial < 5; ++trial) {
        auto map = testutil::random_radiance(rng, 16, 16, 1e-1, 1e3, 1 + trial);
        auto [ldr, params] = itm::tonemap_forward(map);
        auto res = itm::inverse_tonemap_detail(ldr);
        EXPECT_LE(testutil::rel_error(res.params.G, params.G), 1e-9);
        EXPECT_LE(testutil::max_rel_error(res.hdr, map), 1e-6);
        EXPECT_FALSE(res.g_overridden);
    }
}

TEST(InverseTonemap, ZeroFreeInputThrows) {
    itm::LdrImage flat(4, 4, 0.3);
    EXPECT_THROW(itm::inverse_tonemap(flat), itm::ScaleUnrecoverableError);
}

TEST(InverseTonemap, OverrideMatchesClosedForm) {
    itm::LdrImage flat(4, 4, 0.5);
    auto res = itm::inverse_tonemap_detail(flat, 0.18, itm::kDefaultEps, 2.0);
    EXPECT_TRUE(res.g_overridden);
    itm::LumaMap luma = itm::luminance(res.hdr);
    // X' = 1, so every pixel sits at G / a = 2.0 / 0.18.
    for (double v : luma.data)
        EXPECT_LE(testutil::rel_error(v, 2.0 / 0.18), 1e-12);
}

TEST(InverseTonemap, OverrideMustBePositive) {
    itm::LdrImage flat(2, 2, 0.25);
    EXPECT_THROW(itm::inverse_tonemap(flat, 0.18, 1e-6, 0.0), itm::DomainError);
    EXPECT_THROW(itm::inverse_tonemap(flat, 0.18, 1e-6, -1.0), itm::DomainError);
}

TEST(InverseTonemap, SaturatedWhiteStaysFinite) {
    itm::LdrImage img(2, 1);
    img.at(0, 0, 0) = img.at(0, 0, 1) = img.at(0, 0, 2) = 1.0;
    auto res = itm::inverse_tonemap_detail(img, 0.18, itm::kDefaultEps, 3.6);
    const double got = itm::luminance(res.hdr).at(0, 0);
    // Luma clamps to 1 - 1/512, so X' = 511 and E' = (G/a) * 511.
    EXPECT_LE(testutil::rel_error(got, 3.6 / 0.18 * 511.0), 1e-12);
    EXPECT_TRUE(std::isfinite(got));
}

TEST(InverseTonemap, ZeroThresholdSquashesDarkPixels) {
    itm::LdrImage img(2, 1);
    img.at(0, 0, 0) = img.at(0, 0, 1) = img.at(0, 0, 2) = 1.0 / 600.0;
    img.at(1, 0, 0) = img.at(1, 0, 1) = img.at(1, 0, 2) = 0.5;
    auto res = itm::inverse_tonemap_detail(img, 0.18, itm::kDefaultEps, std::nullopt,
                                           1.0 / 512.0);
    EXPECT_EQ(res.partition.n_zero, 1u);
    EXPECT_DOUBLE_EQ(itm::luminance(res.hdr).at(0, 0), 0.0);
}

TEST(InverseTonemap, QuantizationErrorWithinDerivativeBound) {
    // Mid-gray image: quantizing I moves the recovered luminance by at
    // most (0.5/255) * (G/a) / (1 - I)^2 to first order; assert the
    // doubled (full-step) bound.
    itm::LdrImage flat(4, 4, 0.5);
    const double g = 2.0;
    auto exact = itm::inverse_tonemap_detail(flat, 0.18, itm::kDefaultEps, g);
    auto quant = itm::inverse_tonemap_detail(itm::quantize8(flat), 0.18,
                                             itm::kDefaultEps, g);
    const double e0 = itm::luminance(exact.hdr).at(0, 0);
    const double e1 = itm::luminance(quant.hdr).at(0, 0);
    const double iq = 128.0 / 255.0;
    const double bound = (1.0 / 255.0) * (g / 0.18) / ((1.0 - iq) * (1.0 - iq));
    EXPECT_LE(std::abs(e1 - e0), bound);
    EXPECT_GT(std::abs(e1 - e0), 0.0);
}

TEST(ToneParams, ValidateRejectsBadFields) {
    EXPECT_NO_THROW((itm::ToneParams{0.18, 1.0, 1e-6}.validate()));
    EXPECT_THROW((itm::ToneParams{0.0, 1.0, 1e-6}.validate()), itm::DomainError);
    EXPECT_THROW((itm::ToneParams{0.18, 0.0, 1e-6}.validate()), itm::DomainError);
    EXPECT_THROW((itm::ToneParams{0.18, 1.0, 0.0}.validate()), itm::DomainError);
}

}  // namespace
