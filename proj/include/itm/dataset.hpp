#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "itm/camera.hpp"
#include "itm/errors.hpp"
#include "itm/image.hpp"
#include "itm/io/pfm.hpp"
#include "itm/reinhard.hpp"
#include "itm/rng.hpp"

namespace itm {

// Everything needed to regenerate a training pair bit-exactly.
struct Provenance {
    std::string source;
    int crop_x = 0, crop_y = 0, crop_n = 0;
    double v = 0.0;
    double eta = 0.0, gamma = 0.0;
    bool flip_v = false, flip_h = false;
    std::uint64_t seed = 0;
};

// x: what a randomized virtual camera would capture of the patch.
// y: the display-referred rendition the network should reproduce.
struct TrainingPair {
    LdrImage x;
    LdrImage y;
    Provenance prov;
};

struct EpochPlan {
    std::vector<int> ordering;               // permutation of [0, n)
    int batch_size = 0;
    std::vector<std::vector<int>> batches;   // ⌊n/batch⌋ full groups
};

namespace detail {

// Bilinear resampling with half-pixel centers; constant images stay
// constant.
inline RadianceMap resize_bilinear(const RadianceMap& src, int out_w, int out_h) {
    RadianceMap dst(out_w, out_h);
    const double sx = static_cast<double>(src.width) / out_w;
    const double sy = static_cast<double>(src.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(src.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(src.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            const double* p00 = src.px(x0, y0);
            const double* p10 = src.px(x1, y0);
            const double* p01 = src.px(x0, y1);
            const double* p11 = src.px(x1, y1);
            double* q = dst.px(x, y);
            for (int c = 0; c < 3; ++c)
                q[c] = (1 - wy) * ((1 - wx) * p00[c] + wx * p10[c]) +
                       wy * ((1 - wx) * p01[c] + wx * p11[c]);
        }
    }
    return dst;
}

template <class Img>
void flip_vertical(Img& img) {
    for (int y = 0; y < img.height / 2; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                std::swap(img.at(x, y, c), img.at(x, img.height - 1 - y, c));
}

template <class Img>
void flip_horizontal(Img& img) {
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width / 2; ++x)
            for (int c = 0; c < 3; ++c)
                std::swap(img.at(x, y, c), img.at(img.width - 1 - x, y, c));
}

}  // namespace detail

// Deterministic half of random_patch: crop at (crop_x, crop_y) with
// side crop_n, resize to out_size, then flip.
inline RadianceMap extract_patch(const RadianceMap& E, int crop_x, int crop_y, int crop_n,
                                 int out_size, bool flip_v, bool flip_h) {
    if (crop_n < 1 || crop_x < 0 || crop_y < 0 || crop_x + crop_n > E.width ||
        crop_y + crop_n > E.height)
        throw DimensionError("extract_patch: crop rectangle outside the image");
    RadianceMap crop(crop_n, crop_n);
    for (int y = 0; y < crop_n; ++y)
        for (int x = 0; x < crop_n; ++x)
            for (int c = 0; c < 3; ++c)
                crop.at(x, y, c) = E.at(crop_x + x, crop_y + y, c);
    RadianceMap patch = detail::resize_bilinear(crop, out_size, out_size);
    if (flip_v) detail::flip_vertical(patch);
    if (flip_h) detail::flip_horizontal(patch);
    return patch;
}

// Crop side = round(u * min(w, h)) with u ~ U[0.2, 0.6], at least 8
// pixels; position uniform; each flip applied with probability 1/2.
// Draw order: u, crop_x, crop_y, flip_v, flip_h.
inline RadianceMap random_patch(const RadianceMap& E, Rng& rng, int out_size,
                                Provenance* prov = nullptr) {
    if (E.width < 8 || E.height < 8)
        throw DimensionError("random_patch: source image must be at least 8x8");
    if (out_size < 8)
        throw DomainError("random_patch: out_size must be at least 8");
    const int min_side = std::min(E.width, E.height);
    const double u = rng.uniform(0.2, 0.6);
    int n = static_cast<int>(std::lround(u * min_side));
    n = std::min(std::max(n, 8), min_side);
    const int cx = static_cast<int>(rng.uniform_int(0, E.width - n));
    const int cy = static_cast<int>(rng.uniform_int(0, E.height - n));
    const bool fv = rng.bernoulli(0.5);
    const bool fh = rng.bernoulli(0.5);
    if (prov) {
        prov->crop_x = cx;
        prov->crop_y = cy;
        prov->crop_n = n;
        prov->flip_v = fv;
        prov->flip_h = fh;
    }
    return extract_patch(E, cx, cy, n, out_size, fv, fh);
}

// Deterministic half of make_pair: given the patch and the camera
// draws, produce (x, y). x may exceed the LDR range per channel after
// color rescaling and is clamped; its luminance never clips.
inline TrainingPair make_pair_from(const RadianceMap& patch, double v, const CrfParams& crf,
                                   double eps = kDefaultEps) {
    TrainingPair out;
    const LumaMap L = luminance(patch);
    const LumaMap X = sample_exposure(patch, v, eps);
    const LumaMap xl = apply_crf(X, crf);
    out.x = rescale_colors<LdrImage>(patch, L, xl);
    out.y = tonemap_forward(patch, 0.18, eps).first;
    out.prov.v = v;
    out.prov.eta = crf.eta;
    out.prov.gamma = crf.gamma;
    return out;
}

// Draw order: patch draws (see random_patch), then v ~ U[-4, 4], then
// the CRF parameters.
inline TrainingPair make_pair(const RadianceMap& E, Rng& rng, int out_size,
                              double eps = kDefaultEps) {
    Provenance prov;
    prov.seed = rng.seed();
    RadianceMap patch = random_patch(E, rng, out_size, &prov);
    const double v = rng.uniform(-4.0, 4.0);
    const CrfParams crf = sample_crf_params(rng);
    TrainingPair pair = make_pair_from(patch, v, crf, eps);
    pair.prov.source = prov.source;
    pair.prov.crop_x = prov.crop_x;
    pair.prov.crop_y = prov.crop_y;
    pair.prov.crop_n = prov.crop_n;
    pair.prov.flip_v = prov.flip_v;
    pair.prov.flip_h = prov.flip_h;
    pair.prov.seed = prov.seed;
    return pair;
}

// Uniform permutation split into ⌊n/batch⌋ full batches; the remainder
// sits out for that epoch.
inline EpochPlan plan_epoch(int n_images, int batch_size, Rng& rng) {
    if (n_images < 1) throw DomainError("plan_epoch: need at least one image");
    if (batch_size < 1) throw DomainError("plan_epoch: batch_size must be positive");
    EpochPlan plan;
    plan.batch_size = batch_size;
    plan.ordering.resize(static_cast<std::size_t>(n_images));
    for (int i = 0; i < n_images; ++i) plan.ordering[static_cast<std::size_t>(i)] = i;
    for (int i = n_images - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_int(0, i));
        std::swap(plan.ordering[static_cast<std::size_t>(i)],
                  plan.ordering[static_cast<std::size_t>(j)]);
    }
    const int n_batches = n_images / batch_size;
    plan.batches.resize(static_cast<std::size_t>(n_batches));
    for (int b = 0; b < n_batches; ++b)
        plan.batches[static_cast<std::size_t>(b)].assign(
            plan.ordering.begin() + static_cast<std::ptrdiff_t>(b) * batch_size,
            plan.ordering.begin() + static_cast<std::ptrdiff_t>(b + 1) * batch_size);
    return plan;
}

// ---- on-disk dataset ----
//
// out_dir/<source-stem>/p<idx>_x.pfm, p<idx>_y.pfm, p<idx>_meta.txt,
// one subdirectory per source image. The sidecar is key=value lines.

namespace detail {

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline void write_provenance(const std::string& path, const Provenance& p) {
    std::string s;
    s += "source=" + p.source + "\n";
    s += "crop_x=" + std::to_string(p.crop_x) + "\n";
    s += "crop_y=" + std::to_string(p.crop_y) + "\n";
    s += "crop_n=" + std::to_string(p.crop_n) + "\n";
    s += "v=" + detail::fmt_double(p.v) + "\n";
    s += "eta=" + detail::fmt_double(p.eta) + "\n";
    s += "gamma=" + detail::fmt_double(p.gamma) + "\n";
    s += "flip_v=" + std::to_string(p.flip_v ? 1 : 0) + "\n";
    s += "flip_h=" + std::to_string(p.flip_h ? 1 : 0) + "\n";
    s += "seed=" + std::to_string(p.seed) + "\n";
    detail::write_file_bytes(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

inline Provenance read_provenance(const std::string& path) {
    auto buf = detail::read_file_bytes(path);
    const std::string text(buf.begin(), buf.end());
    Provenance p;
    int seen = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = text.substr(pos, nl - pos);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("provenance line without '='", pos);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        try {
            if (key == "source") p.source = val;
            else if (key == "crop_x") p.crop_x = std::stoi(val);
            else if (key == "crop_y") p.crop_y = std::stoi(val);
            else if (key == "crop_n") p.crop_n = std::stoi(val);
            else if (key == "v") p.v = std::stod(val);
            else if (key == "eta") p.eta = std::stod(val);
            else if (key == "gamma") p.gamma = std::stod(val);
            else if (key == "flip_v") p.flip_v = std::stoi(val) != 0;
            else if (key == "flip_h") p.flip_h = std::stoi(val) != 0;
            else if (key == "seed") p.seed = std::stoull(val);
            else throw ParseError("unknown provenance key '" + key + "'", pos);
        } catch (const std::invalid_argument&) {
            throw ParseError("bad provenance value for '" + key + "'", pos);
        } catch (const std::out_of_range&) {
            throw ParseError("provenance value out of range for '" + key + "'", pos);
        }
        ++seen;
        pos = nl + 1;
    }
    if (seen != 10)
        throw ParseError("provenance file must contain exactly 10 keys, found " +
                             std::to_string(seen), 0);
    return p;
}

struct PairPaths {
    std::string x, y, meta;
};

inline PairPaths pair_paths(const std::filesystem::path& dir, int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%04d", index);
    return PairPaths{(dir / (std::string(buf) + "_x.pfm")).string(),
                     (dir / (std::string(buf) + "_y.pfm")).string(),
                     (dir / (std::string(buf) + "_meta.txt")).string()};
}

// Generates pairs_per_image pairs for each source image. Each pair uses
// an independent stream forked from `seed` by its global index, so the
// result is the same no matter how generation is scheduled.
inline int write_dataset(const std::vector<std::string>& hdr_paths,
                         const std::vector<RadianceMap>& images, const std::string& out_dir,
                         int pairs_per_image, int out_size, std::uint64_t seed,
                         double eps = kDefaultEps, bool quantize_x = false) {
    if (images.size() != hdr_paths.size())
        throw DimensionError("write_dataset: path/image count mismatch");
    if (pairs_per_image < 1)
        throw DomainError("write_dataset: pairs_per_image must be positive");
    const Rng master(seed);
    int written = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::string stem = std::filesystem::path(hdr_paths[i]).stem().string();
        const std::filesystem::path dir = std::filesystem::path(out_dir) / stem;
        std::filesystem::create_directories(dir);
        for (int j = 0; j < pairs_per_image; ++j) {
            Rng stream = master.fork(static_cast<std::uint64_t>(i) *
                                         static_cast<std::uint64_t>(pairs_per_image) +
                                     static_cast<std::uint64_t>(j));
            TrainingPair pair = make_pair(images[i], stream, out_size, eps);
            pair.prov.source = std::filesystem::path(hdr_paths[i]).filename().string();
            if (quantize_x) pair.x = quantize8(pair.x);
            const PairPaths paths = pair_paths(dir, j);
            write_pfm(paths.x, pair.x);
            write_pfm(paths.y, pair.y);
            write_provenance(paths.meta, pair.prov);
            ++written;
        }
    }
    return written;
}

// Loads every pair under dir (sorted traversal). Returns x/y pairs.
inline std::vector<std::pair<LdrImage, LdrImage>> load_dataset(const std::string& dir) {
    std::vector<std::string> metas;
    for (auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.size() > 9 && name.substr(name.size() - 9) == "_meta.txt")
            metas.push_back(entry.path().string());
    }
    std::sort(metas.begin(), metas.end());
    std::vector<std::pair<LdrImage, LdrImage>> pairs;
    pairs.reserve(metas.size());
    for (const auto& meta : metas) {
        const std::string base = meta.substr(0, meta.size() - 9);
        pairs.emplace_back(read_pfm_ldr(base + "_x.pfm"), read_pfm_ldr(base + "_y.pfm"));
    }
    return pairs;
}

}  // namespace itm
