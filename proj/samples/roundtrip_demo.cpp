// Walkthrough of the core pipeline: synthesize an HDR scene, tone-map
// it, invert the result back to absolute radiance, and score the
// reconstruction. Run from anywhere; writes nothing to disk.

#include <cstdio>

#include "itm/camera.hpp"
#include "itm/image.hpp"
#include "itm/metrics.hpp"
#include "itm/reinhard.hpp"
#include "itm/rng.hpp"

int main() {
    // A toy scene: a bright sky gradient over a dark interior, with a
    // hard shadow region holding true zeros (what makes the absolute
    // scale recoverable).
    itm::RadianceMap scene(96, 64);
    for (int y = 0; y < scene.height; ++y) {
        for (int x = 0; x < scene.width; ++x) {
            double* p = scene.px(x, y);
            if (y < 24) {  // sky: hundreds of cd/m^2
                const double t = x / 95.0;
                p[0] = 300.0 + 500.0 * t;
                p[1] = 350.0 + 450.0 * t;
                p[2] = 500.0 + 400.0 * t;
            } else if (x < 12 && y > 40) {  // shadow: lights off
                p[0] = p[1] = p[2] = 0.0;
            } else {  // interior: a few cd/m^2
                p[0] = 2.0 + 0.02 * x;
                p[1] = 1.5 + 0.01 * y;
                p[2] = 1.0;
            }
        }
    }

    auto [ldr, params] = itm::tonemap_forward(scene);
    std::printf("tone-mapped with a=%.2f, geometric mean G=%.6f\n", params.a, params.G);

    const itm::InverseResult inv = itm::inverse_tonemap_detail(ldr);
    std::printf("inverted: recovered G=%.9f (%zu of %zu pixels in the zero set)\n",
                inv.params.G, inv.partition.n_zero, inv.partition.n_total);

    double worst = 0.0;
    for (std::size_t i = 0; i < scene.data.size(); ++i) {
        const double ref = scene.data[i];
        if (ref > 0.0) worst = std::max(worst, std::abs(inv.hdr.data[i] - ref) / ref);
    }
    std::printf("worst relative pixel error after the round trip: %.3g\n", worst);

    const itm::QualityReport q = itm::evaluate_hdr(inv.hdr, scene);
    std::printf("perceptual score of the reconstruction: %.6f (%d scales)\n", q.pu_msssim,
                q.scales_used);

    // The same scene through a randomized virtual camera: a plausible
    // photograph rather than the canonical rendition.
    itm::Rng rng(7);
    const itm::CrfParams crf = itm::sample_crf_params(rng);
    const double v = rng.uniform(-4.0, 4.0);
    const itm::LumaMap L = itm::luminance(scene);
    const itm::LumaMap exposed = itm::sample_exposure(scene, v, itm::kDefaultEps);
    const itm::LumaMap captured = itm::apply_crf(exposed, crf);
    const itm::LdrImage photo = itm::rescale_colors<itm::LdrImage>(scene, L, captured);
    double mean = 0.0;
    for (double value : photo.data) mean += value;
    mean /= static_cast<double>(photo.data.size());
    std::printf("virtual camera: v=%+.2f stops, eta=%.3f, gamma=%.3f, mean pixel=%.3f\n", v,
                crf.eta, crf.gamma, mean);
    return 0;
}
