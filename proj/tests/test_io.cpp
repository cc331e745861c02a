#include <gtest/gtest.h>

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "itm/io/pfm.hpp"
#include "itm/io/png_io.hpp"
#include "itm/io/rgbe.hpp"
#include "itm/io/weights.hpp"
#include "itm/rng.hpp"
#include "testutil.hpp"

namespace {

using Bytes = std::vector<std::uint8_t>;

Bytes pfm_bytes(const std::string& magic, const std::string& dims, const std::string& scale,
                const std::vector<float>& payload) {
    std::string header = magic + "\n" + dims + "\n" + scale + "\n";
    Bytes out(header.begin(), header.end());
    for (float f : payload) {
        std::uint8_t b[4];
        std::memcpy(b, &f, 4);
        out.insert(out.end(), b, b + 4);
    }
    return out;
}

void refix_weight_crc(Bytes& b) {
    const auto crc = static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), b.data() + 12, static_cast<uInt>(b.size() - 12)));
    for (int i = 0; i < 4; ++i)
        b[8 + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>((crc >> (8 * i)) & 0xff);
}

TEST(Pfm, WriteReadWriteIsByteStable) {
    testutil::TempDir dir("pfm");
    itm::Rng rng(301);
    auto map = testutil::random_radiance(rng, 5, 4, 1e-3, 1e3, 1);
    const auto p1 = dir.str("a.pfm");
    const auto p2 = dir.str("b.pfm");
    itm::write_pfm(p1, map);

    auto back = itm::read_pfm_radiance(p1);
    ASSERT_EQ(back.width, 5);
    ASSERT_EQ(back.height, 4);
    for (std::size_t i = 0; i < map.data.size(); ++i)
        EXPECT_EQ(back.data[i], static_cast<double>(static_cast<float>(map.data[i])));

    itm::write_pfm(p2, back);
    EXPECT_EQ(itm::detail::read_file_bytes(p1), itm::detail::read_file_bytes(p2));

    const auto bytes = itm::detail::read_file_bytes(p1);
    const std::string head(bytes.begin(), bytes.begin() + 12);
    EXPECT_EQ(head, "PF\n5 4\n-1.0\n");
}

TEST(Pfm, ReaderEnforcesItsDialect) {
    testutil::TempDir dir("pfm_dialect");
    const std::vector<float> px = {0.1f, 0.2f, 0.3f};
    const auto path = dir.str("t.pfm");

    auto expect_parse_error = [&](const Bytes& b) {
        itm::detail::write_file_bytes(path, b);
        EXPECT_THROW(itm::read_pfm_radiance(path), itm::ParseError);
    };

    expect_parse_error(pfm_bytes("Pf", "1 1", "-1.0", px));      // grayscale
    expect_parse_error(pfm_bytes("P6", "1 1", "-1.0", px));      // wrong magic
    expect_parse_error(pfm_bytes("PF", "1 1", "1.0", px));       // wrong scale token
    expect_parse_error(pfm_bytes("PF", "1 1", "+1.0", px));      // big-endian
    expect_parse_error(pfm_bytes("PF", "1 1", "-1.000", px));    // not the emitted token
    expect_parse_error(pfm_bytes("PF", "0 1", "-1.0", px));      // zero width
    expect_parse_error(pfm_bytes("PF", "1 -1", "-1.0", px));     // negative height
    expect_parse_error(pfm_bytes("PF", "2 1", "-1.0", px));      // payload too short

    auto good = pfm_bytes("PF", "1 1", "-1.0", px);
    auto truncated = good;
    truncated.pop_back();
    expect_parse_error(truncated);
    auto trailing = good;
    trailing.push_back(0);
    expect_parse_error(trailing);

    itm::detail::write_file_bytes(path, good);
    EXPECT_NO_THROW(itm::read_pfm_radiance(path));
    EXPECT_THROW(itm::read_pfm_radiance(dir.str("missing.pfm")), itm::Error);
}

TEST(Pfm, RadianceReaderValidatesValues) {
    testutil::TempDir dir("pfm_domain");
    const auto path = dir.str("t.pfm");
    itm::detail::write_file_bytes(
        path, pfm_bytes("PF", "1 1", "-1.0", {1.0f, std::nanf(""), 0.5f}));
    EXPECT_THROW(itm::read_pfm_radiance(path), itm::DomainError);
    itm::detail::write_file_bytes(path, pfm_bytes("PF", "1 1", "-1.0", {1.0f, -2.0f, 0.5f}));
    EXPECT_THROW(itm::read_pfm_radiance(path), itm::DomainError);
}

TEST(Pfm, LdrReaderClampsHairlineAndRejectsRest) {
    testutil::TempDir dir("pfm_ldr");
    const auto path = dir.str("t.pfm");
    itm::detail::write_file_bytes(
        path, pfm_bytes("PF", "1 1", "-1.0", {-1e-10f, 0.5f, 1.0f}));
    auto img = itm::read_pfm_ldr(path);
    EXPECT_EQ(img.data[0], 0.0);
    EXPECT_EQ(img.data[2], 1.0);

    itm::detail::write_file_bytes(path, pfm_bytes("PF", "1 1", "-1.0", {1.5f, 0.0f, 0.0f}));
    EXPECT_THROW(itm::read_pfm_ldr(path), itm::DomainError);
    itm::detail::write_file_bytes(path, pfm_bytes("PF", "1 1", "-1.0", {-1e-8f, 0.0f, 0.0f}));
    EXPECT_THROW(itm::read_pfm_ldr(path), itm::DomainError);
}

TEST(Rgbe, EncodeErrorStaysWithinHalfMantissaStep) {
    itm::Rng rng(302);
    for (int trial = 0; trial < 500; ++trial) {
        double c[3];
        const double base = std::exp(rng.uniform(std::log(1e-6), std::log(1e4)));
        for (double& v : c) v = base * rng.uniform(0.0, 1.0);
        if (trial % 7 == 0) c[1] = c[0];  // exercise tied channels
        const auto q = itm::rgbe_encode(c[0], c[1], c[2]);
        double dec[3];
        itm::rgbe_decode(q, dec);
        if (q.e == 0) {
            for (double v : c) EXPECT_LT(v, 1e-38);
            continue;
        }
        const double bound = std::ldexp(0.5, static_cast<int>(q.e) - 128 - 8) * (1 + 1e-12);
        for (int i = 0; i < 3; ++i)
            EXPECT_LE(std::abs(dec[i] - c[i]), bound)
                << "trial " << trial << " ch " << i << " val " << c[i];

        const auto q2 = itm::rgbe_encode(dec[0], dec[1], dec[2]);
        EXPECT_EQ(q2.r, q.r);
        EXPECT_EQ(q2.g, q.g);
        EXPECT_EQ(q2.b, q.b);
        EXPECT_EQ(q2.e, q.e);
    }
}

TEST(Rgbe, EncodeEdgeCases) {
    const auto black = itm::rgbe_encode(0.0, 0.0, 0.0);
    EXPECT_EQ(black.e, 0);
    const auto tiny = itm::rgbe_encode(1e-39, 1e-39, 1e-39);
    EXPECT_EQ(tiny.e, 0);
    double dec[3];
    itm::rgbe_decode(itm::RgbePixel{}, dec);
    EXPECT_EQ(dec[0], 0.0);

    // rounding at the top of the mantissa range spills into the next exponent
    const auto spill = itm::rgbe_encode(1023.9999, 1.0, 1.0);
    EXPECT_EQ(spill.e, 128 + 11);
    EXPECT_EQ(spill.r, 128);

    EXPECT_THROW(itm::rgbe_encode(1e39, 0.0, 0.0), itm::DomainError);
}

TEST(Rgbe, FileRoundTripMatchesPixelCodec) {
    testutil::TempDir dir("hdr");
    itm::Rng rng(303);
    for (int w : {4, 16}) {  // flat and RLE scanline paths
        auto map = testutil::random_radiance(rng, w, 5, 1e-2, 1e2, 1);
        const auto path = dir.str("img" + std::to_string(w) + ".hdr");
        itm::write_hdr(path, map);
        auto back = itm::read_hdr(path);
        ASSERT_EQ(back.width, w);
        ASSERT_EQ(back.height, 5);
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < w; ++x) {
                const double* orig = map.px(x, y);
                const auto q = itm::rgbe_encode(orig[0], orig[1], orig[2]);
                double want[3];
                itm::rgbe_decode(q, want);
                const double* got = back.px(x, y);
                for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(got[ch], want[ch]);
            }

        // second trip is bitwise idempotent
        const auto path2 = dir.str("img" + std::to_string(w) + "_again.hdr");
        itm::write_hdr(path2, back);
        auto back2 = itm::read_hdr(path2);
        EXPECT_EQ(back2.data, back.data);
        itm::write_hdr(path, back2);
        EXPECT_EQ(itm::detail::read_file_bytes(path), itm::detail::read_file_bytes(path2));
    }
}

TEST(Rgbe, RunsCompressAndRoundTrip) {
    itm::RadianceMap map(64, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 64; ++x) {
            double* p = map.px(x, y);
            const double v = (x < 40) ? 2.0 : 0.25 * (x - 39);
            p[0] = v;
            p[1] = v * 0.5;
            p[2] = 1.0;
        }
    testutil::TempDir dir("hdr_rle");
    const auto path = dir.str("runs.hdr");
    itm::write_hdr(path, map);
    const auto bytes = itm::detail::read_file_bytes(path);
    EXPECT_LT(bytes.size(), static_cast<std::size_t>(64 * 4 * 4));  // beats flat payload alone
    auto back = itm::read_hdr(path);
    const auto q = itm::rgbe_encode(2.0, 1.0, 1.0);
    double want[3];
    itm::rgbe_decode(q, want);
    EXPECT_EQ(back.px(0, 0)[0], want[0]);
}

TEST(Rgbe, ReaderRejectsMalformedFiles) {
    testutil::TempDir dir("hdr_bad");
    const auto path = dir.str("t.hdr");
    auto write_str = [&](const std::string& s) {
        itm::detail::write_file_bytes(path, Bytes(s.begin(), s.end()));
    };

    write_str("#?BOGUS\nFORMAT=32-bit_rle_rgbe\n\n-Y 1 +X 2\n");
    EXPECT_THROW(itm::read_hdr(path), itm::ParseError);

    write_str("#?RADIANCE\nFORMAT=32-bit_rle_xyze\n\n-Y 1 +X 2\n");
    EXPECT_THROW(itm::read_hdr(path), itm::ParseError);

    write_str("#?RADIANCE\n\n-Y 1 +X 2\n");  // no FORMAT line
    EXPECT_THROW(itm::read_hdr(path), itm::ParseError);

    write_str("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n+X 2 -Y 1\n");
    EXPECT_THROW(itm::read_hdr(path), itm::ParseError);

    write_str("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 1 +X 2\n");  // header only
    EXPECT_THROW(itm::read_hdr(path), itm::ParseError);

    // flat scanline carrying an old-style repeat marker after pixel 0
    {
        std::string head = "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 1 +X 2\n";
        Bytes b(head.begin(), head.end());
        const std::uint8_t pixels[] = {130, 140, 150, 132, 1, 1, 1, 130};
        b.insert(b.end(), pixels, pixels + 8);
        itm::detail::write_file_bytes(path, b);
        EXPECT_THROW(itm::read_hdr(path), itm::ParseError);
    }

    // valid RLE file, then surgical damage
    itm::Rng rng(304);
    auto map = testutil::random_radiance(rng, 8, 2, 0.1, 10.0, 0);
    itm::write_hdr(path, map);
    auto good = itm::detail::read_file_bytes(path);
    EXPECT_NO_THROW(itm::read_hdr(path));

    const std::string text(good.begin(), good.end());
    const std::size_t scan = text.find("+X 8\n") + 5;  // first scanline marker
    ASSERT_EQ(good[scan], 2u);
    ASSERT_EQ(good[scan + 1], 2u);

    auto bad_width = good;
    bad_width[scan + 3] = 9;
    itm::detail::write_file_bytes(path, bad_width);
    EXPECT_THROW(itm::read_hdr(path), itm::ParseError);

    auto truncated = good;
    truncated.pop_back();
    itm::detail::write_file_bytes(path, truncated);
    EXPECT_THROW(itm::read_hdr(path), itm::ParseError);

    auto trailing = good;
    trailing.push_back(7);
    itm::detail::write_file_bytes(path, trailing);
    EXPECT_THROW(itm::read_hdr(path), itm::ParseError);

    auto zero_literal = good;
    zero_literal[scan + 4] = 0;  // first RLE op byte
    itm::detail::write_file_bytes(path, zero_literal);
    EXPECT_THROW(itm::read_hdr(path), itm::ParseError);
}

TEST(Weights, SaveLoadRoundTripIsExact) {
    itm::UNetConfig cfg;
    cfg.base_channels = 4;
    cfg.depth = 1;
    cfg.input_size = 8;
    itm::Rng rng(305);
    auto net = itm::UNet<float>::build(cfg, rng);
    itm::nn::Tensor<float> x({2, 3, 8, 8});
    for (auto& v : x.data) v = static_cast<float>(rng.uniform());
    (void)net.forward(x, true);  // make running stats non-trivial

    testutil::TempDir dir("weights");
    const auto p1 = dir.str("net.bin");
    itm::save_weights(p1, net);

    auto loaded = itm::load_weights<float>(p1);
    EXPECT_EQ(loaded.cfg.base_channels, 4);
    EXPECT_EQ(loaded.cfg.depth, 1);
    auto pa = net.params(), pb = loaded.params();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_EQ(pa[i].name, pb[i].name);
        EXPECT_EQ(pa[i].param->data, pb[i].param->data) << pa[i].name;
    }
    auto sa = net.stats(), sb = loaded.stats();
    ASSERT_EQ(sa.size(), sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i)
        EXPECT_EQ(sa[i].tensor->data, sb[i].tensor->data) << sa[i].name;

    // loaded net is ready for inference and resaves to identical bytes
    EXPECT_NO_THROW(loaded.forward(x, false));
    const auto p2 = dir.str("net2.bin");
    itm::save_weights(p2, loaded);
    EXPECT_EQ(itm::detail::read_file_bytes(p1), itm::detail::read_file_bytes(p2));

    const auto manifest = itm::weight_manifest(p1);
    ASSERT_EQ(manifest.size(), 40u);  // 28 parameters + 12 running stats
    EXPECT_EQ(manifest.front().first, "enc0.conv1.weight");
    EXPECT_EQ(manifest.front().second, (std::vector<int>{4, 3, 3, 3}));
    EXPECT_EQ(manifest.back().first, "dec0.bn2.run_var");
}

TEST(Weights, CorruptionIsDetectedWithStructuredErrors) {
    itm::UNetConfig cfg;
    cfg.base_channels = 4;
    cfg.depth = 1;
    cfg.input_size = 8;
    itm::Rng rng(306);
    auto net = itm::UNet<float>::build(cfg, rng);
    testutil::TempDir dir("weights_bad");
    const auto good_path = dir.str("net.bin");
    itm::save_weights(good_path, net);
    const auto good = itm::detail::read_file_bytes(good_path);
    const auto path = dir.str("bad.bin");

    auto flipped = good;
    flipped[40] ^= 0x01;
    itm::detail::write_file_bytes(path, flipped);
    EXPECT_THROW(itm::load_weights<float>(path), itm::IntegrityError);

    auto bad_magic = good;
    bad_magic[0] = 'X';
    itm::detail::write_file_bytes(path, bad_magic);
    EXPECT_THROW(itm::load_weights<float>(path), itm::ParseError);

    auto bad_version = good;
    bad_version[4] = 9;
    itm::detail::write_file_bytes(path, bad_version);
    EXPECT_THROW(itm::load_weights<float>(path), itm::ParseError);

    auto bad_cfg = good;
    bad_cfg[16] = 0;  // depth field
    refix_weight_crc(bad_cfg);
    itm::detail::write_file_bytes(path, bad_cfg);
    EXPECT_THROW(itm::load_weights<float>(path), itm::ParseError);

    auto truncated = good;
    truncated.resize(truncated.size() - 2);
    itm::detail::write_file_bytes(path, truncated);
    EXPECT_THROW(itm::load_weights<float>(path), itm::IntegrityError);

    auto trailing = good;
    trailing.push_back(0);
    refix_weight_crc(trailing);
    itm::detail::write_file_bytes(path, trailing);
    EXPECT_THROW(itm::load_weights<float>(path), itm::ParseError);
}

TEST(Png, RoundTripEqualsQuantization) {
    testutil::TempDir dir("png");
    itm::Rng rng(307);
    itm::LdrImage img(9, 7);
    for (auto& v : img.data) v = rng.uniform();
    const auto path = dir.str("img.png");
    itm::write_png(path, img);
    auto back = itm::read_png(path);
    ASSERT_EQ(back.width, 9);
    ASSERT_EQ(back.height, 7);
    EXPECT_TRUE(back.quantized);
    const auto want = itm::quantize8(img);
    EXPECT_EQ(back.data, want.data);
}

TEST(Png, ErrorsAreStructured) {
    testutil::TempDir dir("png_bad");
    EXPECT_THROW(itm::read_png(dir.str("missing.png")), itm::Error);
    const auto path = dir.str("junk.png");
    itm::detail::write_file_bytes(path, Bytes{1, 2, 3, 4});
    EXPECT_THROW(itm::read_png(path), itm::ParseError);
    itm::LdrImage img(2, 2, 0.5);
    EXPECT_THROW(itm::write_png(dir.str("no_dir") + "/x/y.png", img), itm::Error);
}

}  // namespace
