#pragma once

#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "itm/errors.hpp"
#include "itm/image.hpp"

namespace itm {

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw Error("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    std::streamoff len = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(len));
    if (len > 0)
        f.read(reinterpret_cast<char*>(buf.data()), len);
    if (!f)
        throw Error("failed reading file: " + path);
    return buf;
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw Error("cannot create file: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f)
        throw Error("failed writing file: " + path);
}

// Cursor over a byte buffer with offset-carrying errors.
struct ByteReader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;

    bool eof() const { return pos >= buf.size(); }
    std::uint8_t peek() const {
        if (eof()) throw ParseError("unexpected end of file", pos);
        return buf[pos];
    }
    std::uint8_t next() {
        std::uint8_t b = peek();
        ++pos;
        return b;
    }
    void expect_eof() const {
        if (!eof()) throw ParseError("trailing bytes after image data", pos);
    }
    void need(std::size_t n) const {
        if (pos + n > buf.size())
            throw ParseError("unexpected end of file", buf.size());
    }
};

inline bool is_ws(std::uint8_t b) {
    return b == ' ' || b == '\t' || b == '\n' || b == '\r' || b == '\f' || b == '\v';
}

inline void skip_ws1(ByteReader& r) {
    if (!is_ws(r.peek()))
        throw ParseError("expected whitespace", r.pos);
    r.next();
    while (!r.eof() && is_ws(r.buf[r.pos])) r.next();
}

inline int parse_pos_int(ByteReader& r, const char* what) {
    std::size_t start = r.pos;
    long v = 0;
    int digits = 0;
    while (!r.eof() && std::isdigit(r.buf[r.pos])) {
        v = v * 10 + (r.buf[r.pos] - '0');
        ++digits;
        if (v > 1000000000L)
            throw ParseError(std::string(what) + " out of range", start);
        r.next();
    }
    if (digits == 0)
        throw ParseError(std::string("expected ") + what, r.pos);
    if (v < 1)
        throw ParseError(std::string(what) + " must be >= 1", start);
    return static_cast<int>(v);
}

}  // namespace detail

// Portable float map, color variant only. This toolkit reads and writes
// the little-endian dialect it emits itself: scale line is exactly
// "-1.0", rows stored bottom-to-top as 32-bit floats.
template <class Img>
inline void write_pfm(const std::string& path, const Img& img) {
    std::string header =
        "PF\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n-1.0\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + img.data.size() * 4);
    for (int y = img.height - 1; y >= 0; --y) {
        for (int x = 0; x < img.width; ++x) {
            const double* p = img.px(x, y);
            for (int c = 0; c < 3; ++c) {
                float f = static_cast<float>(p[c]);
                std::uint8_t b[4];
                std::memcpy(b, &f, 4);
                out.insert(out.end(), b, b + 4);
            }
        }
    }
    detail::write_file_bytes(path, out);
}

namespace detail {

inline Rgb read_pfm_rgb(const std::string& path) {
    auto buf = read_file_bytes(path);
    ByteReader r{buf};
    if (r.next() != 'P')
        throw ParseError("not a PFM file (bad magic)", 0);
    std::uint8_t kind = r.next();
    if (kind == 'f')
        throw ParseError("grayscale 'Pf' PFM is unsupported; expected color 'PF'", 1);
    if (kind != 'F')
        throw ParseError("not a PFM file (bad magic)", 1);
    skip_ws1(r);
    int w = parse_pos_int(r, "width");
    skip_ws1(r);
    int h = parse_pos_int(r, "height");
    skip_ws1(r);
    // Scale token: exactly the dialect this writer emits. A positive
    // scale would mean big-endian data, which is rejected outright.
    std::size_t scale_at = r.pos;
    std::string scale;
    while (!r.eof() && !is_ws(r.buf[r.pos]))
        scale.push_back(static_cast<char>(r.next()));
    if (!scale.empty() && scale[0] == '+')
        throw ParseError("big-endian PFM (positive scale) is unsupported", scale_at);
    if (scale != "-1.0")
        throw ParseError("unsupported PFM scale '" + scale + "' (expected -1.0)", scale_at);
    if (!is_ws(r.peek()))
        throw ParseError("expected single whitespace after scale", r.pos);
    r.next();

    Rgb img(w, h);
    std::size_t need = static_cast<std::size_t>(w) * h * 3 * 4;
    r.need(need);
    for (int y = h - 1; y >= 0; --y) {
        for (int x = 0; x < w; ++x) {
            double* p = img.px(x, y);
            for (int c = 0; c < 3; ++c) {
                float f;
                std::memcpy(&f, &buf[r.pos], 4);
                r.pos += 4;
                p[c] = static_cast<double>(f);
            }
        }
    }
    r.expect_eof();
    return img;
}

}  // namespace detail

inline RadianceMap read_pfm_radiance(const std::string& path) {
    detail::Rgb rgb = detail::read_pfm_rgb(path);
    RadianceMap out;
    static_cast<detail::Rgb&>(out) = std::move(rgb);
    out.validate("PFM " + path);
    return out;
}

inline LdrImage read_pfm_ldr(const std::string& path) {
    detail::Rgb rgb = detail::read_pfm_rgb(path);
    LdrImage out;
    static_cast<detail::Rgb&>(out) = std::move(rgb);
    for (double& v : out.data) {
        if (!(v >= -1e-9 && v <= 1.0 + 1e-9))
            throw DomainError("PFM " + path + ": values outside [0,1]; not an LDR image");
        v = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

}  // namespace itm
