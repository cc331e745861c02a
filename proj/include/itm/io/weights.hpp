#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include <zlib.h>

#include "itm/errors.hpp"
#include "itm/io/pfm.hpp"
#include "itm/unet.hpp"

namespace itm {

// Weight container: "ITMW" magic, format version, CRC-32 of everything
// after the checksum field, network configuration, then named tensors
// (u16 name length + name, u8 ndim, u32 dims, float32 data), all
// little-endian. Tensor order: trainable parameters in registry order,
// then batch-norm running statistics.
constexpr std::uint32_t kWeightFormatVersion = 1;

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

inline std::uint16_t get_u16(ByteReader& r) {
    r.need(2);
    std::uint16_t v = r.next();
    v = static_cast<std::uint16_t>(v | (static_cast<std::uint16_t>(r.next()) << 8));
    return v;
}

inline std::uint32_t get_u32(ByteReader& r) {
    r.need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(r.next()) << (8 * i);
    return v;
}

inline float get_f32(ByteReader& r) {
    const std::uint32_t bits = get_u32(r);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

template <class T>
void put_tensor(std::vector<std::uint8_t>& out, const std::string& name,
                const nn::Tensor<T>& t) {
    if (name.size() > 0xffff) throw DomainError("tensor name too long");
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(t.ndim()));
    for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (const auto& v : t.data) put_f32(out, static_cast<float>(v));
}

}  // namespace detail

template <class T>
void save_weights(const std::string& path, UNet<T>& net) {
    std::vector<std::uint8_t> out;
    out.reserve(64);
    out.insert(out.end(), {'I', 'T', 'M', 'W'});
    detail::put_u32(out, kWeightFormatVersion);
    detail::put_u32(out, 0);  // checksum placeholder
    detail::put_u32(out, static_cast<std::uint32_t>(net.cfg.base_channels));
    detail::put_u32(out, static_cast<std::uint32_t>(net.cfg.depth));
    detail::put_u32(out, static_cast<std::uint32_t>(net.cfg.input_size));
    detail::put_u32(out, static_cast<std::uint32_t>(net.cfg.scale_num));
    detail::put_u32(out, static_cast<std::uint32_t>(net.cfg.scale_den));
    const auto params = net.params();
    const auto stats = net.stats();
    detail::put_u32(out, static_cast<std::uint32_t>(params.size() + stats.size()));
    for (const auto& p : params) detail::put_tensor(out, p.name, *p.param);
    for (const auto& s : stats) detail::put_tensor(out, s.name, *s.tensor);
    const auto crc = static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), out.data() + 12, static_cast<uInt>(out.size() - 12)));
    for (int i = 0; i < 4; ++i) out[8 + static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>((crc >> (8 * i)) & 0xff);
    detail::write_file_bytes(path, out);
}

namespace detail {

inline UNetConfig read_weight_header(ByteReader& r) {
    r.need(4);
    if (!(r.next() == 'I' && r.next() == 'T' && r.next() == 'M' && r.next() == 'W'))
        throw ParseError("not a weight container (bad magic)", 0);
    const std::uint32_t version = get_u32(r);
    if (version != kWeightFormatVersion)
        throw ParseError("unsupported weight container version " + std::to_string(version), 4);
    const std::uint32_t stored_crc = get_u32(r);
    const auto computed = static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), r.buf.data() + 12, static_cast<uInt>(r.buf.size() - 12)));
    if (stored_crc != computed)
        throw IntegrityError("weight container checksum mismatch (file corrupted)");
    UNetConfig cfg;
    cfg.base_channels = static_cast<int>(get_u32(r));
    cfg.depth = static_cast<int>(get_u32(r));
    cfg.input_size = static_cast<int>(get_u32(r));
    cfg.scale_num = static_cast<int>(get_u32(r));
    cfg.scale_den = static_cast<int>(get_u32(r));
    try {
        cfg.validate();
    } catch (const Error& e) {
        throw ParseError(std::string("stored configuration invalid: ") + e.what(), 12);
    }
    return cfg;
}

struct TensorRecord {
    std::string name;
    std::vector<int> shape;
    std::vector<float> values;
};

inline TensorRecord read_tensor_record(ByteReader& r, bool keep_values) {
    TensorRecord rec;
    const std::uint16_t name_len = get_u16(r);
    r.need(name_len);
    rec.name.reserve(name_len);
    for (int i = 0; i < name_len; ++i) rec.name.push_back(static_cast<char>(r.next()));
    r.need(1);
    const int ndim = r.next();
    if (ndim < 1 || ndim > 4)
        throw ParseError("tensor '" + rec.name + "' has unsupported rank " +
                             std::to_string(ndim), r.pos);
    std::size_t count = 1;
    for (int i = 0; i < ndim; ++i) {
        const std::uint32_t d = get_u32(r);
        if (d == 0 || d > (1u << 24))
            throw ParseError("tensor '" + rec.name + "' has invalid dimension", r.pos);
        rec.shape.push_back(static_cast<int>(d));
        count *= d;
    }
    if (keep_values) {
        rec.values.resize(count);
        for (std::size_t i = 0; i < count; ++i) rec.values[i] = get_f32(r);
    } else {
        r.need(count * 4);
        r.pos += count * 4;
    }
    return rec;
}

}  // namespace detail

// Tensor names and shapes stored in a container, in file order.
inline std::vector<std::pair<std::string, std::vector<int>>> weight_manifest(
    const std::string& path) {
    const auto buf = detail::read_file_bytes(path);
    detail::ByteReader r{buf};
    (void)detail::read_weight_header(r);
    const std::uint32_t n = detail::get_u32(r);
    std::vector<std::pair<std::string, std::vector<int>>> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        auto rec = detail::read_tensor_record(r, false);
        out.emplace_back(std::move(rec.name), std::move(rec.shape));
    }
    r.expect_eof();
    return out;
}

// Rebuilds the network stored at path. Tensors must appear in exactly
// the order and shapes the stored configuration implies.
template <class T = float>
UNet<T> load_weights(const std::string& path) {
    const auto buf = detail::read_file_bytes(path);
    detail::ByteReader r{buf};
    const UNetConfig cfg = detail::read_weight_header(r);
    UNet<T> net(cfg);
    const auto params = net.params();
    const auto stats = net.stats();
    const std::uint32_t n = detail::get_u32(r);
    if (n != params.size() + stats.size())
        throw ParseError("weight container holds " + std::to_string(n) + " tensors, expected " +
                             std::to_string(params.size() + stats.size()), r.pos);
    auto load_into = [&](const std::string& expect_name, nn::Tensor<T>& dst) {
        const std::size_t at = r.pos;
        auto rec = detail::read_tensor_record(r, true);
        if (rec.name != expect_name)
            throw ParseError("unexpected tensor '" + rec.name + "', expected '" + expect_name +
                                 "'", at);
        if (rec.shape != dst.shape)
            throw ParseError("tensor '" + rec.name + "' has shape mismatch", at);
        for (std::size_t i = 0; i < rec.values.size(); ++i)
            dst.data[i] = static_cast<T>(rec.values[i]);
    };
    for (const auto& p : params) load_into(p.name, *p.param);
    for (const auto& s : stats) load_into(s.name, *s.tensor);
    r.expect_eof();
    net.for_each_bn([](nn::BatchNorm<T>& bn) { bn.stats_initialized = true; });
    return net;
}

}  // namespace itm
