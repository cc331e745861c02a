#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "itm/dataset.hpp"
#include "itm/errors.hpp"
#include "itm/image.hpp"
#include "itm/nn/layers.hpp"
#include "itm/nn/optim.hpp"
#include "itm/reinhard.hpp"
#include "itm/rng.hpp"

namespace itm {

// Sigmoid outputs never reach exact zero, so predicted renditions are
// thresholded at half an 8-bit level to define the zero set that
// anchors absolute scale recovery.
constexpr double kPredictZeroThreshold = 1.0 / 512.0;

struct UNetConfig {
    int base_channels = 32;
    int depth = 5;
    int input_size = 64;
    // uniform channel multiplier for reduced-width runs (e.g. 1/8)
    int scale_num = 1;
    int scale_den = 1;

    // width of encoder level l (0-based); l = depth is the bottleneck
    int width(int level) const {
        const long long k = static_cast<long long>(base_channels) << level;
        const long long num = k * scale_num;
        if (num % scale_den != 0)
            throw DomainError("UNetConfig: channel count " + std::to_string(k) + " * " +
                              std::to_string(scale_num) + "/" + std::to_string(scale_den) +
                              " is not an integer");
        const long long w = num / scale_den;
        if (w < 1 || w > (1 << 20))
            throw DomainError("UNetConfig: channel width out of range");
        return static_cast<int>(w);
    }

    void validate() const {
        if (base_channels < 1) throw DomainError("UNetConfig: base_channels must be >= 1");
        if (depth < 1 || depth > 10) throw DomainError("UNetConfig: depth must be in [1, 10]");
        if (scale_num < 1 || scale_den < 1)
            throw DomainError("UNetConfig: channel scale must be positive");
        if (input_size < (1 << depth) || input_size % (1 << depth) != 0)
            throw DomainError("UNetConfig: input_size must be a positive multiple of 2^depth");
        for (int l = 0; l <= depth; ++l) (void)width(l);
    }

    // encoder widths, bottleneck, decoder widths
    std::vector<int> channel_ladder() const {
        std::vector<int> v;
        for (int l = 0; l < depth; ++l) v.push_back(width(l));
        v.push_back(width(depth));
        for (int l = depth - 1; l >= 0; --l) v.push_back(width(l));
        return v;
    }
};

// Two [3x3 conv -> ReLU -> BN] stages at constant output width.
template <class T>
struct ConvBlock {
    nn::Conv2d<T> conv1;
    nn::Relu<T> r1;
    nn::BatchNorm<T> bn1;
    nn::Conv2d<T> conv2;
    nn::Relu<T> r2;
    nn::BatchNorm<T> bn2;

    ConvBlock(int in_ch, int out_ch)
        : conv1(in_ch, out_ch), bn1(out_ch), conv2(out_ch, out_ch), bn2(out_ch) {}

    nn::Tensor<T> forward(const nn::Tensor<T>& x, bool train) {
        auto h = conv1.forward(x, train);
        h = r1.forward(h, train);
        h = bn1.forward(h, train);
        h = conv2.forward(h, train);
        h = r2.forward(h, train);
        return bn2.forward(h, train);
    }

    nn::Tensor<T> backward(const nn::Tensor<T>& gy) {
        auto g = bn2.backward(gy);
        g = r2.backward(g);
        g = conv2.backward(g);
        g = bn1.backward(g);
        g = r1.backward(g);
        return conv1.backward(g);
    }
};

// Reference to one trainable tensor; fan_in > 0 marks weight tensors
// that receive random initialization.
template <class T>
struct ParamRef {
    std::string name;
    nn::Tensor<T>* param;
    nn::Tensor<T>* grad;
    int fan_in;
};

template <class T>
struct StatRef {
    std::string name;
    nn::Tensor<T>* tensor;
};

// Encoder-decoder with skip concatenations; channel widths double per
// pooling stage up to the bottleneck and mirror back up; 3-channel
// sigmoid head.
template <class T = float>
class UNet {
public:
    using Scalar = T;

    struct DecStage {
        nn::TConv2d<T> tconv;
        nn::Relu<T> relu;
        ConvBlock<T> block;
        DecStage(int in_ch, int out_ch) : tconv(in_ch, out_ch), block(2 * out_ch, out_ch) {}
    };

    UNetConfig cfg;
    std::vector<ConvBlock<T>> enc;
    std::vector<nn::MaxPool2<T>> pools;
    std::vector<ConvBlock<T>> mid;  // single bottleneck block
    std::vector<DecStage> dec;      // deepest first
    std::vector<nn::Conv2d<T>> head;
    nn::Sigmoid<T> out_act;

    explicit UNet(const UNetConfig& config) : cfg(config) {
        cfg.validate();
        enc.reserve(static_cast<std::size_t>(cfg.depth));
        pools.resize(static_cast<std::size_t>(cfg.depth));
        for (int l = 0; l < cfg.depth; ++l)
            enc.emplace_back(l == 0 ? 3 : cfg.width(l - 1), cfg.width(l));
        mid.emplace_back(cfg.width(cfg.depth - 1), cfg.width(cfg.depth));
        dec.reserve(static_cast<std::size_t>(cfg.depth));
        for (int l = cfg.depth - 1; l >= 0; --l)
            dec.emplace_back(cfg.width(l + 1), cfg.width(l));
        head.emplace_back(cfg.width(0), 3);
    }

    // Draws every weight tensor in registry order from He's
    // distribution; biases and BN affine parameters keep their
    // deterministic defaults; BN running estimates start at identity.
    static UNet build(const UNetConfig& config, Rng& rng) {
        UNet net(config);
        for (auto& p : net.params())
            if (p.fan_in > 0) nn::he_init(*p.param, p.fan_in, rng);
        net.for_each_bn([](nn::BatchNorm<T>& bn) { bn.init_identity_stats(); });
        return net;
    }

    template <class F>
    void for_each_bn(F f) {
        for (auto& b : enc) { f(b.bn1); f(b.bn2); }
        f(mid[0].bn1);
        f(mid[0].bn2);
        for (auto& d : dec) { f(d.block.bn1); f(d.block.bn2); }
    }

    // Trainable tensors in the fixed order used for initialization,
    // optimization, and serialization.
    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> out;
        auto add_conv = [&](const std::string& prefix, nn::Conv2d<T>& c) {
            out.push_back({prefix + ".weight", &c.w, &c.gw, c.in_ch * c.kh * c.kw});
            out.push_back({prefix + ".bias", &c.b, &c.gb, 0});
        };
        auto add_bn = [&](const std::string& prefix, nn::BatchNorm<T>& bn) {
            out.push_back({prefix + ".gamma", &bn.gamma, &bn.ggamma, 0});
            out.push_back({prefix + ".beta", &bn.beta, &bn.gbeta, 0});
        };
        auto add_block = [&](const std::string& prefix, ConvBlock<T>& b) {
            add_conv(prefix + ".conv1", b.conv1);
            add_bn(prefix + ".bn1", b.bn1);
            add_conv(prefix + ".conv2", b.conv2);
            add_bn(prefix + ".bn2", b.bn2);
        };
        for (int l = 0; l < cfg.depth; ++l)
            add_block("enc" + std::to_string(l), enc[static_cast<std::size_t>(l)]);
        add_block("bottleneck", mid[0]);
        for (std::size_t i = 0; i < dec.size(); ++i) {
            const int l = cfg.depth - 1 - static_cast<int>(i);
            const std::string prefix = "dec" + std::to_string(l);
            auto& d = dec[i];
            out.push_back({prefix + ".tconv.weight", &d.tconv.w, &d.tconv.gw,
                           d.tconv.in_ch * d.tconv.kh * d.tconv.kw});
            out.push_back({prefix + ".tconv.bias", &d.tconv.b, &d.tconv.gb, 0});
            add_block(prefix, d.block);
        }
        add_conv("final", head[0]);
        return out;
    }

    std::vector<StatRef<T>> stats() {
        std::vector<StatRef<T>> out;
        auto add = [&](const std::string& prefix, nn::BatchNorm<T>& bn) {
            out.push_back({prefix + ".run_mean", &bn.run_mean});
            out.push_back({prefix + ".run_var", &bn.run_var});
        };
        for (int l = 0; l < cfg.depth; ++l) {
            add("enc" + std::to_string(l) + ".bn1", enc[static_cast<std::size_t>(l)].bn1);
            add("enc" + std::to_string(l) + ".bn2", enc[static_cast<std::size_t>(l)].bn2);
        }
        add("bottleneck.bn1", mid[0].bn1);
        add("bottleneck.bn2", mid[0].bn2);
        for (std::size_t i = 0; i < dec.size(); ++i) {
            const int l = cfg.depth - 1 - static_cast<int>(i);
            add("dec" + std::to_string(l) + ".bn1", dec[i].block.bn1);
            add("dec" + std::to_string(l) + ".bn2", dec[i].block.bn2);
        }
        return out;
    }

    std::size_t param_count() {
        std::size_t n = 0;
        for (auto& p : params()) n += p.param->size();
        return n;
    }

    nn::Tensor<T> forward(const nn::Tensor<T>& x, bool train) {
        nn::require_4d(x, "UNet::forward");
        if (x.dim(1) != 3)
            throw DimensionError("UNet::forward: expected 3 input channels, got " +
                                 std::to_string(x.dim(1)));
        if (x.dim(2) != cfg.input_size || x.dim(3) != cfg.input_size)
            throw DimensionError("UNet::forward: input is " + std::to_string(x.dim(2)) + "x" +
                                 std::to_string(x.dim(3)) + ", network is configured for " +
                                 std::to_string(cfg.input_size) + "x" +
                                 std::to_string(cfg.input_size));
        std::vector<nn::Tensor<T>> skips(static_cast<std::size_t>(cfg.depth));
        nn::Tensor<T> h = x;
        for (int l = 0; l < cfg.depth; ++l) {
            h = enc[static_cast<std::size_t>(l)].forward(h, train);
            skips[static_cast<std::size_t>(l)] = h;
            h = pools[static_cast<std::size_t>(l)].forward(h, train);
        }
        h = mid[0].forward(h, train);
        for (std::size_t i = 0; i < dec.size(); ++i) {
            const int l = cfg.depth - 1 - static_cast<int>(i);
            h = dec[i].tconv.forward(h, train);
            h = dec[i].relu.forward(h, train);
            h = nn::concat_channels(skips[static_cast<std::size_t>(l)], h);
            h = dec[i].block.forward(h, train);
        }
        h = head[0].forward(h, train);
        return out_act.forward(h, train);
    }

    nn::Tensor<T> backward(const nn::Tensor<T>& gy) {
        auto g = out_act.backward(gy);
        g = head[0].backward(g);
        std::vector<nn::Tensor<T>> skip_grads(static_cast<std::size_t>(cfg.depth));
        for (std::size_t ri = dec.size(); ri-- > 0;) {
            const int l = cfg.depth - 1 - static_cast<int>(ri);
            g = dec[ri].block.backward(g);
            auto [gs, gu] = nn::split_channels(g, cfg.width(l), cfg.width(l));
            skip_grads[static_cast<std::size_t>(l)] = std::move(gs);
            g = dec[ri].relu.backward(gu);
            g = dec[ri].tconv.backward(g);
        }
        g = mid[0].backward(g);
        for (int l = cfg.depth - 1; l >= 0; --l) {
            g = pools[static_cast<std::size_t>(l)].backward(g);
            auto& gs = skip_grads[static_cast<std::size_t>(l)];
            for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += gs.data[i];
            g = enc[static_cast<std::size_t>(l)].backward(g);
        }
        return g;
    }

    void zero_grads() {
        for (auto& p : params()) p.grad->fill(T(0));
    }
};

// ---- image/tensor bridges ----

template <class T>
nn::Tensor<T> to_tensor(const std::vector<const LdrImage*>& batch) {
    if (batch.empty()) throw DimensionError("to_tensor: empty batch");
    const int H = batch[0]->height, W = batch[0]->width;
    nn::Tensor<T> t({static_cast<int>(batch.size()), 3, H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (std::size_t n = 0; n < batch.size(); ++n) {
        const LdrImage& img = *batch[n];
        if (img.height != H || img.width != W)
            throw DimensionError("to_tensor: mixed image sizes in batch");
        for (int c = 0; c < 3; ++c) {
            T* dst = t.ptr() + (n * 3 + static_cast<std::size_t>(c)) * plane;
            for (std::size_t i = 0; i < plane; ++i)
                dst[i] = static_cast<T>(img.data[i * 3 + static_cast<std::size_t>(c)]);
        }
    }
    return t;
}

template <class T>
nn::Tensor<T> to_tensor(const LdrImage& img) {
    return to_tensor<T>(std::vector<const LdrImage*>{&img});
}

template <class T>
LdrImage from_tensor(const nn::Tensor<T>& t, int n = 0) {
    nn::require_4d(t, "from_tensor");
    if (t.dim(1) != 3) throw DimensionError("from_tensor: expected 3 channels");
    const int H = t.dim(2), W = t.dim(3);
    LdrImage img(W, H);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int c = 0; c < 3; ++c) {
        const T* src = t.ptr() + (static_cast<std::size_t>(n) * 3 + static_cast<std::size_t>(c)) *
                                     plane;
        for (std::size_t i = 0; i < plane; ++i) {
            double v = static_cast<double>(src[i]);
            img.data[i * 3 + static_cast<std::size_t>(c)] = std::min(std::max(v, 0.0), 1.0);
        }
    }
    return img;
}

// ---- training ----

struct TrainHyper {
    int epochs = 1;
    int batch = 8;
    double a = 0.18;
    std::uint64_t seed = 0;
    double eps = kDefaultEps;
    long max_iterations = 0;  // 0 = no cap
    nn::AdamConfig adam;
};

struct TrainReport {
    std::vector<double> epoch_loss;  // mean batch loss per epoch
    long iterations = 0;
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;
    UNetConfig config;
};

// Seed layout: stream 0 initializes weights, stream 1/epoch drives
// epoch plans, stream 2/epoch/batch/slot drives pair generation.
template <class T>
TrainReport train(UNet<T>& net, const std::vector<RadianceMap>& images, const TrainHyper& hy) {
    if (images.empty()) throw DomainError("train: need at least one source image");
    if (hy.epochs < 0) throw DomainError("train: epochs must be >= 0");
    if (hy.batch < 1) throw DomainError("train: batch must be >= 1");
    const auto t0 = std::chrono::steady_clock::now();
    const Rng master(hy.seed);
    TrainReport report;
    report.seed = hy.seed;
    report.config = net.cfg;
    std::vector<ParamRef<T>> params = net.params();
    std::vector<nn::AdamState> opt(params.size());
    const int n = static_cast<int>(images.size());
    const int batch = std::min(hy.batch, n);
    bool done = false;
    for (int e = 0; e < hy.epochs && !done; ++e) {
        Rng plan_rng = master.fork(1).fork(static_cast<std::uint64_t>(e));
        const EpochPlan plan = plan_epoch(n, batch, plan_rng);
        double loss_sum = 0.0;
        int batches_run = 0;
        for (std::size_t b = 0; b < plan.batches.size(); ++b) {
            std::vector<LdrImage> xs, ys;
            xs.reserve(plan.batches[b].size());
            ys.reserve(plan.batches[b].size());
            for (std::size_t s = 0; s < plan.batches[b].size(); ++s) {
                Rng pair_rng = master.fork(2)
                                   .fork(static_cast<std::uint64_t>(e))
                                   .fork(static_cast<std::uint64_t>(b))
                                   .fork(static_cast<std::uint64_t>(s));
                TrainingPair pair =
                    make_pair(images[static_cast<std::size_t>(plan.batches[b][s])], pair_rng,
                              net.cfg.input_size, hy.eps);
                xs.push_back(std::move(pair.x));
                ys.push_back(std::move(pair.y));
            }
            std::vector<const LdrImage*> xp, yp;
            for (auto& im : xs) xp.push_back(&im);
            for (auto& im : ys) yp.push_back(&im);
            const auto x = to_tensor<T>(xp);
            const auto y = to_tensor<T>(yp);
            net.zero_grads();
            const auto pred = net.forward(x, true);
            const double loss = nn::mse_loss(pred, y);
            if (!std::isfinite(loss)) {
                double pmin = pred.data.empty() ? 0.0 : static_cast<double>(pred.data[0]);
                double pmax = pmin;
                for (auto v : pred.data) {
                    pmin = std::min(pmin, static_cast<double>(v));
                    pmax = std::max(pmax, static_cast<double>(v));
                }
                throw Error("train: non-finite loss at epoch " + std::to_string(e) +
                            ", iteration " + std::to_string(report.iterations) +
                            " (prediction range [" + std::to_string(pmin) + ", " +
                            std::to_string(pmax) + "])");
            }
            net.backward(nn::mse_grad(pred, y));
            for (std::size_t i = 0; i < params.size(); ++i)
                nn::adam_step(*params[i].param, *params[i].grad, opt[i], hy.adam);
            loss_sum += loss;
            ++batches_run;
            ++report.iterations;
            if (hy.max_iterations > 0 && report.iterations >= hy.max_iterations) {
                done = true;
                break;
            }
        }
        if (batches_run > 0) report.epoch_loss.push_back(loss_sum / batches_run);
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// Same loop over a pre-generated dataset: epoch plans permute pair
// indices, batches feed stored (x, y) images directly.
template <class T>
TrainReport train_on_pairs(UNet<T>& net,
                           const std::vector<std::pair<LdrImage, LdrImage>>& pairs,
                           const TrainHyper& hy) {
    if (pairs.empty()) throw DomainError("train_on_pairs: need at least one pair");
    if (hy.epochs < 0) throw DomainError("train_on_pairs: epochs must be >= 0");
    if (hy.batch < 1) throw DomainError("train_on_pairs: batch must be >= 1");
    const auto t0 = std::chrono::steady_clock::now();
    const Rng master(hy.seed);
    TrainReport report;
    report.seed = hy.seed;
    report.config = net.cfg;
    std::vector<ParamRef<T>> params = net.params();
    std::vector<nn::AdamState> opt(params.size());
    const int n = static_cast<int>(pairs.size());
    const int batch = std::min(hy.batch, n);
    bool done = false;
    for (int e = 0; e < hy.epochs && !done; ++e) {
        Rng plan_rng = master.fork(1).fork(static_cast<std::uint64_t>(e));
        const EpochPlan plan = plan_epoch(n, batch, plan_rng);
        double loss_sum = 0.0;
        int batches_run = 0;
        for (std::size_t b = 0; b < plan.batches.size(); ++b) {
            std::vector<const LdrImage*> xp, yp;
            for (int idx : plan.batches[b]) {
                xp.push_back(&pairs[static_cast<std::size_t>(idx)].first);
                yp.push_back(&pairs[static_cast<std::size_t>(idx)].second);
            }
            const auto x = to_tensor<T>(xp);
            const auto y = to_tensor<T>(yp);
            net.zero_grads();
            const auto pred = net.forward(x, true);
            const double loss = nn::mse_loss(pred, y);
            if (!std::isfinite(loss))
                throw Error("train_on_pairs: non-finite loss at epoch " + std::to_string(e) +
                            ", iteration " + std::to_string(report.iterations));
            net.backward(nn::mse_grad(pred, y));
            for (std::size_t i = 0; i < params.size(); ++i)
                nn::adam_step(*params[i].param, *params[i].grad, opt[i], hy.adam);
            loss_sum += loss;
            ++batches_run;
            ++report.iterations;
            if (hy.max_iterations > 0 && report.iterations >= hy.max_iterations) {
                done = true;
                break;
            }
        }
        if (batches_run > 0) report.epoch_loss.push_back(loss_sum / batches_run);
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// Build-and-train convenience with the documented seed layout.
template <class T = float>
std::pair<UNet<T>, TrainReport> train_new(const std::vector<RadianceMap>& images,
                                          const UNetConfig& cfg, const TrainHyper& hy) {
    const Rng master(hy.seed);
    Rng init_rng = master.fork(0);
    UNet<T> net = UNet<T>::build(cfg, init_rng);
    TrainReport report = train(net, images, hy);
    return {std::move(net), std::move(report)};
}

// Inverts a predicted rendition back to absolute radiance. The zero
// set is taken as luminance <= kPredictZeroThreshold; if it is empty
// the scale cannot be recovered and g_override must be supplied.
template <class T>
RadianceMap predict_hdr(UNet<T>& net, const LdrImage& x, double a = 0.18,
                        std::optional<double> g_override = std::nullopt,
                        double eps = kDefaultEps, LdrImage* y_hat_out = nullptr) {
    x.validate("predict_hdr");
    const auto xt = to_tensor<T>(x);
    const auto yt = net.forward(xt, false);
    LdrImage y_hat = from_tensor(yt);
    if (y_hat_out) *y_hat_out = y_hat;
    return inverse_tonemap(y_hat, a, eps, g_override, kPredictZeroThreshold);
}

}  // namespace itm
