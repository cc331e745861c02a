#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "itm/errors.hpp"
#include "itm/image.hpp"
#include "itm/io/pfm.hpp"  // detail::ByteReader, file helpers

namespace itm {

// One Radiance-format pixel: three 8-bit mantissas and a shared 8-bit
// exponent. e = 0 encodes black.
struct RgbePixel {
    std::uint8_t r = 0, g = 0, b = 0, e = 0;
};

// mantissa/256 * 2^(e-128) per channel.
inline void rgbe_decode(const RgbePixel& p, double out[3]) {
    if (p.e == 0) {
        out[0] = out[1] = out[2] = 0.0;
        return;
    }
    const double scale = std::ldexp(1.0, static_cast<int>(p.e) - 128 - 8);
    out[0] = p.r * scale;
    out[1] = p.g * scale;
    out[2] = p.b * scale;
}

// Shared exponent from the largest channel, mantissas rounded to
// nearest. Rounding keeps every channel within half a mantissa step
// (0.5/256 relative to the 2^(e-128) scale).
inline RgbePixel rgbe_encode(double r, double g, double b) {
    const double maxc = std::max(r, std::max(g, b));
    if (maxc < 1e-38)
        return RgbePixel{};
    int e = 0;
    std::frexp(maxc, &e);
    for (;;) {
        const double scale = std::ldexp(1.0, 8 - e);  // 256 / 2^e
        const int mr = static_cast<int>(std::lround(r * scale));
        const int mg = static_cast<int>(std::lround(g * scale));
        const int mb = static_cast<int>(std::lround(b * scale));
        if (mr > 255 || mg > 255 || mb > 255) {
            ++e;  // rounding spilled over; retry one exponent up
            continue;
        }
        if (e + 128 > 255)
            throw DomainError("rgbe_encode: value too large for RGBE");
        if (e + 128 < 1)
            return RgbePixel{};  // below representable range: black
        return RgbePixel{static_cast<std::uint8_t>(mr), static_cast<std::uint8_t>(mg),
                         static_cast<std::uint8_t>(mb), static_cast<std::uint8_t>(e + 128)};
    }
}

namespace detail {

inline std::string read_line(ByteReader& r) {
    std::string line;
    for (;;) {
        std::uint8_t b = r.next();
        if (b == '\n') return line;
        line.push_back(static_cast<char>(b));
        if (line.size() > 4096)
            throw ParseError("header line too long", r.pos);
    }
}

// Decodes one RLE-compressed component plane of `width` bytes.
inline void read_rle_plane(ByteReader& r, std::uint8_t* dst, int width) {
    int filled = 0;
    while (filled < width) {
        std::size_t at = r.pos;
        int count = r.next();
        if (count > 128) {
            count -= 128;  // run of one repeated byte
            if (filled + count > width)
                throw ParseError("RLE run overflows scanline", at);
            std::uint8_t v = r.next();
            for (int i = 0; i < count; ++i) dst[filled++] = v;
        } else {
            if (count == 0)
                throw ParseError("zero-length RLE literal", at);
            if (filled + count > width)
                throw ParseError("RLE literal overflows scanline", at);
            for (int i = 0; i < count; ++i) dst[filled++] = r.next();
        }
    }
}

inline void write_rle_plane(std::vector<std::uint8_t>& out, const std::uint8_t* src, int width) {
    int pos = 0;
    while (pos < width) {
        // find next run of >= 4 identical bytes
        int run_start = pos;
        int run_len = 0;
        while (run_start < width) {
            run_len = 1;
            while (run_len < 127 && run_start + run_len < width &&
                   src[run_start + run_len] == src[run_start])
                ++run_len;
            if (run_len >= 4) break;
            run_start += run_len;
        }
        if (run_start >= width || run_len < 4) run_start = width;
        // literals up to the run
        int lit = pos;
        while (lit < run_start) {
            int n = std::min(128, run_start - lit);
            out.push_back(static_cast<std::uint8_t>(n));
            out.insert(out.end(), src + lit, src + lit + n);
            lit += n;
        }
        if (run_start < width) {
            out.push_back(static_cast<std::uint8_t>(128 + run_len));
            out.push_back(src[run_start]);
            pos = run_start + run_len;
        } else {
            pos = width;
        }
    }
}

}  // namespace detail

// Radiance RGBE reader. Accepts 32-bit_rle_rgbe files with -Y +X
// orientation, both new-style RLE and flat scanlines.
inline RadianceMap read_hdr(const std::string& path) {
    auto buf = detail::read_file_bytes(path);
    detail::ByteReader r{buf};

    std::string magic = detail::read_line(r);
    if (magic != "#?RADIANCE" && magic != "#?RGBE")
        throw ParseError("not a Radiance RGBE file (bad magic)", 0);
    bool format_seen = false;
    for (;;) {
        std::size_t at = r.pos;
        std::string line = detail::read_line(r);
        if (line.empty()) break;  // header terminator
        if (line == "FORMAT=32-bit_rle_rgbe") {
            format_seen = true;
        } else if (line.rfind("FORMAT=", 0) == 0) {
            throw ParseError("unsupported format '" + line.substr(7) + "'", at);
        }
        // other header lines (comments, EXPOSURE, ...) are ignored
    }
    if (!format_seen)
        throw ParseError("missing FORMAT=32-bit_rle_rgbe header line", r.pos);

    std::size_t res_at = r.pos;
    std::string res = detail::read_line(r);
    int w = 0, h = 0;
    {
        int n = 0;
        if (std::sscanf(res.c_str(), "-Y %d +X %d%n", &h, &w, &n) != 2 ||
            n != static_cast<int>(res.size()))
            throw ParseError("unsupported resolution line '" + res + "' (expected -Y h +X w)",
                             res_at);
        if (w < 1 || h < 1)
            throw ParseError("invalid image dimensions", res_at);
    }

    RadianceMap img(w, h);
    std::vector<std::uint8_t> planes(static_cast<std::size_t>(w) * 4);
    for (int y = 0; y < h; ++y) {
        std::size_t line_at = r.pos;
        r.need(4);
        std::uint8_t b0 = r.next(), b1 = r.next(), b2 = r.next(), b3 = r.next();
        if (b0 == 2 && b1 == 2 && (b2 & 0x80) == 0) {
            // new-style RLE scanline
            int enc_w = (static_cast<int>(b2) << 8) | b3;
            if (enc_w != w)
                throw ParseError("RLE scanline width " + std::to_string(enc_w) +
                                     " does not match header width " + std::to_string(w),
                                 line_at);
            for (int c = 0; c < 4; ++c)
                detail::read_rle_plane(r, planes.data() + static_cast<std::size_t>(c) * w, w);
            for (int x = 0; x < w; ++x) {
                RgbePixel p{planes[x], planes[w + x], planes[2 * static_cast<std::size_t>(w) + x],
                            planes[3 * static_cast<std::size_t>(w) + x]};
                rgbe_decode(p, img.px(x, y));
            }
        } else {
            // flat scanline; the four bytes already read form pixel 0
            RgbePixel p{b0, b1, b2, b3};
            rgbe_decode(p, img.px(0, y));
            for (int x = 1; x < w; ++x) {
                std::size_t at = r.pos;
                r.need(4);
                p = RgbePixel{r.next(), r.next(), r.next(), r.next()};
                if (p.r == 1 && p.g == 1 && p.b == 1)
                    throw ParseError("old-style RLE repeat codes are unsupported", at);
                rgbe_decode(p, img.px(x, y));
            }
        }
    }
    r.expect_eof();
    return img;
}

// Writes new-style RLE scanlines when the width allows, flat otherwise.
inline void write_hdr(const std::string& path, const RadianceMap& img) {
    img.validate("write_hdr");
    std::string header = "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y " +
                         std::to_string(img.height) + " +X " + std::to_string(img.width) + "\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    const int w = img.width;
    const bool rle = (w >= 8 && w <= 0x7fff);
    std::vector<std::uint8_t> planes(static_cast<std::size_t>(w) * 4);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < w; ++x) {
            const double* p = img.px(x, y);
            RgbePixel q = rgbe_encode(p[0], p[1], p[2]);
            planes[x] = q.r;
            planes[w + x] = q.g;
            planes[2 * static_cast<std::size_t>(w) + x] = q.b;
            planes[3 * static_cast<std::size_t>(w) + x] = q.e;
        }
        if (rle) {
            out.push_back(2);
            out.push_back(2);
            out.push_back(static_cast<std::uint8_t>(w >> 8));
            out.push_back(static_cast<std::uint8_t>(w & 0xff));
            for (int c = 0; c < 4; ++c)
                detail::write_rle_plane(out, planes.data() + static_cast<std::size_t>(c) * w, w);
        } else {
            for (int x = 0; x < w; ++x) {
                out.push_back(planes[x]);
                out.push_back(planes[w + x]);
                out.push_back(planes[2 * static_cast<std::size_t>(w) + x]);
                out.push_back(planes[3 * static_cast<std::size_t>(w) + x]);
            }
        }
    }
    detail::write_file_bytes(path, out);
}

}  // namespace itm
