#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <png.h>

#include "itm/errors.hpp"
#include "itm/image.hpp"

namespace itm {

// 8-bit RGB PNG. Values are stored as k/255, so a decoded image
// round-trips bit-exactly through quantize8.
inline LdrImage read_png(const std::string& path) {
    png_image pim;
    std::memset(&pim, 0, sizeof(pim));
    pim.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&pim, path.c_str()))
        throw ParseError(std::string("read_png: ") + pim.message, 0);
    pim.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(pim));
    if (!png_image_finish_read(&pim, nullptr, bytes.data(), 0, nullptr)) {
        png_image_free(&pim);
        throw ParseError(std::string("read_png: ") + pim.message, 0);
    }
    LdrImage img(static_cast<int>(pim.width), static_cast<int>(pim.height));
    img.quantized = true;
    for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = bytes[i] / 255.0;
    return img;
}

inline void write_png(const std::string& path, const LdrImage& img) {
    img.validate("write_png");
    png_image pim;
    std::memset(&pim, 0, sizeof(pim));
    pim.version = PNG_IMAGE_VERSION;
    pim.width = static_cast<png_uint_32>(img.width);
    pim.height = static_cast<png_uint_32>(img.height);
    pim.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> bytes(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i)
        bytes[i] = static_cast<std::uint8_t>(std::lround(img.data[i] * 255.0));
    if (!png_image_write_to_file(&pim, path.c_str(), 0, bytes.data(), 0, nullptr))
        throw Error(std::string("write_png: ") + pim.message);
}

}  // namespace itm
