#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "itm/errors.hpp"
#include "itm/nn/tensor.hpp"

// Layers own their parameters, gradients, and forward caches. forward()
// with train=true stores what backward() needs; backward() consumes the
// cache, accumulates parameter gradients, and returns the input
// gradient. All reductions run serially in a fixed order with double
// accumulators, so results are reproducible bit for bit.
namespace itm::nn {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;  // running = 0.9*running + 0.1*batch

// 2-d convolution, stride 1, zero padding, same spatial size for
// kh = kw = 3, pad = 1. Weights (K, C, kh, kw).
template <class T>
struct Conv2d {
    int in_ch, out_ch, kh, kw, pad;
    Tensor<T> w, b;
    Tensor<T> gw, gb;
    Tensor<T> x_cache;

    Conv2d(int in_c, int out_c, int k = 3, int padding = 1)
        : in_ch(in_c), out_ch(out_c), kh(k), kw(k), pad(padding),
          w({out_c, in_c, k, k}), b({out_c}),
          gw({out_c, in_c, k, k}), gb({out_c}) {}

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        require_4d(x, "Conv2d");
        if (x.dim(1) != in_ch)
            throw DimensionError("Conv2d: input has " + std::to_string(x.dim(1)) +
                                 " channels, layer expects " + std::to_string(in_ch));
        const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int OH = H + 2 * pad - kh + 1, OW = W + 2 * pad - kw + 1;
        if (OH < 1 || OW < 1)
            throw DimensionError("Conv2d: input smaller than kernel");
        Tensor<double> acc({N, out_ch, OH, OW});
        for (int n = 0; n < N; ++n) {
            for (int k = 0; k < out_ch; ++k) {
                double* op = acc.ptr() + ((static_cast<std::size_t>(n) * out_ch + k) *
                                          static_cast<std::size_t>(OH) * OW);
                const double bias = static_cast<double>(b.data[static_cast<std::size_t>(k)]);
                for (std::size_t i = 0, m = static_cast<std::size_t>(OH) * OW; i < m; ++i)
                    op[i] = bias;
                for (int c = 0; c < in_ch; ++c) {
                    const T* ip = x.ptr() + ((static_cast<std::size_t>(n) * in_ch + c) *
                                             static_cast<std::size_t>(H) * W);
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const double wv = static_cast<double>(
                                w.data[(((static_cast<std::size_t>(k) * in_ch + c) * kh + ky) *
                                        kw) + kx]);
                            for (int oy = 0; oy < OH; ++oy) {
                                const int iy = oy + ky - pad;
                                if (iy < 0 || iy >= H) continue;
                                const int x_lo = std::max(0, pad - kx);
                                const int x_hi = std::min(OW, W + pad - kx);
                                double* orow = op + static_cast<std::size_t>(oy) * OW;
                                const T* irow =
                                    ip + static_cast<std::size_t>(iy) * W + (kx - pad);
                                for (int ox = x_lo; ox < x_hi; ++ox)
                                    orow[ox] += wv * static_cast<double>(irow[ox]);
                            }
                        }
                    }
                }
            }
        }
        Tensor<T> y({N, out_ch, OH, OW});
        for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = static_cast<T>(acc.data[i]);
        if (train) x_cache = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const Tensor<T>& x = x_cache;
        if (x.empty()) throw Error("Conv2d::backward called without a cached forward pass");
        const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int OH = gy.dim(2), OW = gy.dim(3);
        // bias gradient
        for (int k = 0; k < out_ch; ++k) {
            double s = 0.0;
            for (int n = 0; n < N; ++n) {
                const T* gp = gy.ptr() + ((static_cast<std::size_t>(n) * out_ch + k) *
                                          static_cast<std::size_t>(OH) * OW);
                for (std::size_t i = 0, m = static_cast<std::size_t>(OH) * OW; i < m; ++i)
                    s += static_cast<double>(gp[i]);
            }
            gb.data[static_cast<std::size_t>(k)] += static_cast<T>(s);
        }
        // weight gradient
        for (int k = 0; k < out_ch; ++k) {
            for (int c = 0; c < in_ch; ++c) {
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        double s = 0.0;
                        for (int n = 0; n < N; ++n) {
                            const T* gp = gy.ptr() + ((static_cast<std::size_t>(n) * out_ch + k) *
                                                      static_cast<std::size_t>(OH) * OW);
                            const T* ip = x.ptr() + ((static_cast<std::size_t>(n) * in_ch + c) *
                                                     static_cast<std::size_t>(H) * W);
                            for (int oy = 0; oy < OH; ++oy) {
                                const int iy = oy + ky - pad;
                                if (iy < 0 || iy >= H) continue;
                                const int x_lo = std::max(0, pad - kx);
                                const int x_hi = std::min(OW, W + pad - kx);
                                const T* grow = gp + static_cast<std::size_t>(oy) * OW;
                                const T* irow =
                                    ip + static_cast<std::size_t>(iy) * W + (kx - pad);
                                for (int ox = x_lo; ox < x_hi; ++ox)
                                    s += static_cast<double>(grow[ox]) *
                                         static_cast<double>(irow[ox]);
                            }
                        }
                        gw.data[(((static_cast<std::size_t>(k) * in_ch + c) * kh + ky) * kw) +
                                kx] += static_cast<T>(s);
                    }
                }
            }
        }
        // input gradient (correlation with the flipped kernel)
        Tensor<double> gacc({N, in_ch, H, W});
        for (int n = 0; n < N; ++n) {
            for (int k = 0; k < out_ch; ++k) {
                const T* gp = gy.ptr() + ((static_cast<std::size_t>(n) * out_ch + k) *
                                          static_cast<std::size_t>(OH) * OW);
                for (int c = 0; c < in_ch; ++c) {
                    double* xp = gacc.ptr() + ((static_cast<std::size_t>(n) * in_ch + c) *
                                               static_cast<std::size_t>(H) * W);
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const double wv = static_cast<double>(
                                w.data[(((static_cast<std::size_t>(k) * in_ch + c) * kh + ky) *
                                        kw) + kx]);
                            for (int oy = 0; oy < OH; ++oy) {
                                const int iy = oy + ky - pad;
                                if (iy < 0 || iy >= H) continue;
                                const int x_lo = std::max(0, pad - kx);
                                const int x_hi = std::min(OW, W + pad - kx);
                                const T* grow = gp + static_cast<std::size_t>(oy) * OW;
                                double* xrow =
                                    xp + static_cast<std::size_t>(iy) * W + (kx - pad);
                                for (int ox = x_lo; ox < x_hi; ++ox)
                                    xrow[ox] += wv * static_cast<double>(grow[ox]);
                            }
                        }
                    }
                }
            }
        }
        Tensor<T> gx({N, in_ch, H, W});
        for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] = static_cast<T>(gacc.data[i]);
        x_cache = Tensor<T>{};
        return gx;
    }
};

// Transposed 2-d convolution, kernel 4, stride 2, padding 1: exact x2
// upsampling (out = 2*in). Weights (C, K, kh, kw), input channels first.
template <class T>
struct TConv2d {
    int in_ch, out_ch, kh, kw, stride, pad;
    Tensor<T> w, b;
    Tensor<T> gw, gb;
    Tensor<T> x_cache;

    TConv2d(int in_c, int out_c, int k = 4, int s = 2, int padding = 1)
        : in_ch(in_c), out_ch(out_c), kh(k), kw(k), stride(s), pad(padding),
          w({in_c, out_c, k, k}), b({out_c}),
          gw({in_c, out_c, k, k}), gb({out_c}) {}

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        require_4d(x, "TConv2d");
        if (x.dim(1) != in_ch)
            throw DimensionError("TConv2d: input has " + std::to_string(x.dim(1)) +
                                 " channels, layer expects " + std::to_string(in_ch));
        const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int OH = (H - 1) * stride - 2 * pad + kh;
        const int OW = (W - 1) * stride - 2 * pad + kw;
        if (OH < 1 || OW < 1) throw DimensionError("TConv2d: input too small");
        Tensor<T> y({N, out_ch, OH, OW});
        Tensor<double> acc({out_ch, OH, OW});
        for (int n = 0; n < N; ++n) {
            acc.fill(0.0);
            for (int c = 0; c < in_ch; ++c) {
                const T* ip = x.ptr() + ((static_cast<std::size_t>(n) * in_ch + c) *
                                         static_cast<std::size_t>(H) * W);
                for (int k = 0; k < out_ch; ++k) {
                    double* op = acc.ptr() + static_cast<std::size_t>(k) *
                                                 static_cast<std::size_t>(OH) * OW;
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const double wv = static_cast<double>(
                                w.data[(((static_cast<std::size_t>(c) * out_ch + k) * kh + ky) *
                                        kw) + kx]);
                            for (int iy = 0; iy < H; ++iy) {
                                const int oy = iy * stride - pad + ky;
                                if (oy < 0 || oy >= OH) continue;
                                const T* irow = ip + static_cast<std::size_t>(iy) * W;
                                double* orow = op + static_cast<std::size_t>(oy) * OW;
                                for (int ix = 0; ix < W; ++ix) {
                                    const int ox = ix * stride - pad + kx;
                                    if (ox < 0 || ox >= OW) continue;
                                    orow[ox] += wv * static_cast<double>(irow[ix]);
                                }
                            }
                        }
                    }
                }
            }
            for (int k = 0; k < out_ch; ++k) {
                const double bias = static_cast<double>(b.data[static_cast<std::size_t>(k)]);
                T* op = y.ptr() + ((static_cast<std::size_t>(n) * out_ch + k) *
                                   static_cast<std::size_t>(OH) * OW);
                const double* ap = acc.ptr() + static_cast<std::size_t>(k) *
                                                   static_cast<std::size_t>(OH) * OW;
                for (std::size_t i = 0, m = static_cast<std::size_t>(OH) * OW; i < m; ++i)
                    op[i] = static_cast<T>(ap[i] + bias);
            }
        }
        if (train) x_cache = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const Tensor<T>& x = x_cache;
        if (x.empty()) throw Error("TConv2d::backward called without a cached forward pass");
        const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int OH = gy.dim(2), OW = gy.dim(3);
        for (int k = 0; k < out_ch; ++k) {
            double s = 0.0;
            for (int n = 0; n < N; ++n) {
                const T* gp = gy.ptr() + ((static_cast<std::size_t>(n) * out_ch + k) *
                                          static_cast<std::size_t>(OH) * OW);
                for (std::size_t i = 0, m = static_cast<std::size_t>(OH) * OW; i < m; ++i)
                    s += static_cast<double>(gp[i]);
            }
            gb.data[static_cast<std::size_t>(k)] += static_cast<T>(s);
        }
        for (int c = 0; c < in_ch; ++c) {
            for (int k = 0; k < out_ch; ++k) {
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        double s = 0.0;
                        for (int n = 0; n < N; ++n) {
                            const T* ip = x.ptr() + ((static_cast<std::size_t>(n) * in_ch + c) *
                                                     static_cast<std::size_t>(H) * W);
                            const T* gp = gy.ptr() + ((static_cast<std::size_t>(n) * out_ch + k) *
                                                      static_cast<std::size_t>(OH) * OW);
                            for (int iy = 0; iy < H; ++iy) {
                                const int oy = iy * stride - pad + ky;
                                if (oy < 0 || oy >= OH) continue;
                                const T* irow = ip + static_cast<std::size_t>(iy) * W;
                                const T* grow = gp + static_cast<std::size_t>(oy) * OW;
                                for (int ix = 0; ix < W; ++ix) {
                                    const int ox = ix * stride - pad + kx;
                                    if (ox < 0 || ox >= OW) continue;
                                    s += static_cast<double>(irow[ix]) *
                                         static_cast<double>(grow[ox]);
                                }
                            }
                        }
                        gw.data[(((static_cast<std::size_t>(c) * out_ch + k) * kh + ky) * kw) +
                                kx] += static_cast<T>(s);
                    }
                }
            }
        }
        Tensor<T> gx({N, in_ch, H, W});
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < in_ch; ++c) {
                T* xp = gx.ptr() + ((static_cast<std::size_t>(n) * in_ch + c) *
                                    static_cast<std::size_t>(H) * W);
                for (int iy = 0; iy < H; ++iy) {
                    for (int ix = 0; ix < W; ++ix) {
                        double s = 0.0;
                        for (int k = 0; k < out_ch; ++k) {
                            const T* gp = gy.ptr() +
                                          ((static_cast<std::size_t>(n) * out_ch + k) *
                                           static_cast<std::size_t>(OH) * OW);
                            for (int ky = 0; ky < kh; ++ky) {
                                const int oy = iy * stride - pad + ky;
                                if (oy < 0 || oy >= OH) continue;
                                for (int kx = 0; kx < kw; ++kx) {
                                    const int ox = ix * stride - pad + kx;
                                    if (ox < 0 || ox >= OW) continue;
                                    s += static_cast<double>(
                                             w.data[(((static_cast<std::size_t>(c) * out_ch + k) *
                                                      kh + ky) * kw) + kx]) *
                                         static_cast<double>(
                                             gp[static_cast<std::size_t>(oy) * OW + ox]);
                                }
                            }
                        }
                        xp[static_cast<std::size_t>(iy) * W + ix] = static_cast<T>(s);
                    }
                }
            }
        }
        x_cache = Tensor<T>{};
        return gx;
    }
};

// 2x2 max pooling, stride 2. Requires even spatial dims. Ties resolve
// to the first maximum in row-major window order.
template <class T>
struct MaxPool2 {
    std::vector<std::uint32_t> argmax;
    std::vector<int> in_shape;

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        require_4d(x, "MaxPool2");
        const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        if (H % 2 != 0 || W % 2 != 0)
            throw DimensionError("MaxPool2: spatial dims must be even, got " + shape_str(x));
        const int OH = H / 2, OW = W / 2;
        Tensor<T> y({N, C, OH, OW});
        if (train) {
            argmax.assign(y.size(), 0);
            in_shape = x.shape;
        }
        std::size_t o = 0;
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const T* ip = x.ptr() + ((static_cast<std::size_t>(n) * C + c) *
                                         static_cast<std::size_t>(H) * W);
                for (int oy = 0; oy < OH; ++oy) {
                    for (int ox = 0; ox < OW; ++ox, ++o) {
                        const std::size_t base =
                            static_cast<std::size_t>(2 * oy) * W + 2 * ox;
                        const std::size_t cand[4] = {base, base + 1,
                                                     base + static_cast<std::size_t>(W),
                                                     base + static_cast<std::size_t>(W) + 1};
                        std::size_t best = cand[0];
                        T bv = ip[cand[0]];
                        for (int i = 1; i < 4; ++i) {
                            if (ip[cand[i]] > bv) {
                                bv = ip[cand[i]];
                                best = cand[i];
                            }
                        }
                        y.data[o] = bv;
                        if (train) argmax[o] = static_cast<std::uint32_t>(best);
                    }
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        if (in_shape.empty())
            throw Error("MaxPool2::backward called without a cached forward pass");
        Tensor<T> gx(in_shape);
        const int N = gy.dim(0), C = gy.dim(1), OH = gy.dim(2), OW = gy.dim(3);
        const int H = in_shape[2], W = in_shape[3];
        (void)W;
        std::size_t o = 0;
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                T* xp = gx.ptr() + ((static_cast<std::size_t>(n) * C + c) *
                                    static_cast<std::size_t>(H) * in_shape[3]);
                for (int i = 0; i < OH * OW; ++i, ++o) xp[argmax[o]] += gy.data[o];
            }
        }
        in_shape.clear();
        argmax.clear();
        return gx;
    }
};

// max(x, 0); the derivative at exactly 0 is taken as 0.
template <class T>
struct Relu {
    Tensor<T> x_cache;

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        Tensor<T> y(x.shape);
        for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
        if (train) x_cache = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        if (x_cache.empty()) throw Error("Relu::backward called without a cached forward pass");
        Tensor<T> gx(gy.shape);
        for (std::size_t i = 0; i < gy.size(); ++i)
            gx.data[i] = x_cache.data[i] > T(0) ? gy.data[i] : T(0);
        x_cache = Tensor<T>{};
        return gx;
    }
};

// 1 / (1 + exp(-x))
template <class T>
struct Sigmoid {
    Tensor<T> y_cache;

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        Tensor<T> y(x.shape);
        for (std::size_t i = 0; i < x.size(); ++i)
            y.data[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x.data[i]))));
        if (train) y_cache = y;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        if (y_cache.empty()) throw Error("Sigmoid::backward called without a cached forward pass");
        Tensor<T> gx(gy.shape);
        for (std::size_t i = 0; i < gy.size(); ++i) {
            const double y = static_cast<double>(y_cache.data[i]);
            gx.data[i] = static_cast<T>(static_cast<double>(gy.data[i]) * y * (1.0 - y));
        }
        y_cache = Tensor<T>{};
        return gx;
    }
};

// Per-channel batch normalization over (N, H, W). Training mode uses
// biased batch statistics and folds them into the running estimates
// (momentum 0.9); inference mode uses the running estimates and throws
// if they were never set.
template <class T>
struct BatchNorm {
    int channels;
    Tensor<T> gamma, beta;
    Tensor<T> ggamma, gbeta;
    Tensor<T> run_mean, run_var;
    bool stats_initialized = false;

    // backward cache
    Tensor<T> xhat_cache;
    std::vector<double> inv_std_cache;

    explicit BatchNorm(int c)
        : channels(c), gamma({c}), beta({c}), ggamma({c}), gbeta({c}),
          run_mean({c}), run_var({c}) {
        gamma.fill(T(1));
    }

    // Sets the running estimates to the identity transform so an
    // untrained network can still run in inference mode.
    void init_identity_stats() {
        run_mean.fill(T(0));
        run_var.fill(T(1));
        stats_initialized = true;
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        require_4d(x, "BatchNorm");
        if (x.dim(1) != channels)
            throw DimensionError("BatchNorm: input has " + std::to_string(x.dim(1)) +
                                 " channels, layer expects " + std::to_string(channels));
        const int N = x.dim(0), C = channels, H = x.dim(2), W = x.dim(3);
        const std::size_t plane = static_cast<std::size_t>(H) * W;
        const std::size_t m = static_cast<std::size_t>(N) * plane;
        Tensor<T> y(x.shape);
        if (!train) {
            if (!stats_initialized)
                throw Error("BatchNorm: inference requested before any statistics exist; "
                            "train first or initialize the running estimates");
            for (int c = 0; c < C; ++c) {
                const double mean = static_cast<double>(run_mean.data[static_cast<std::size_t>(c)]);
                const double inv =
                    1.0 / std::sqrt(static_cast<double>(run_var.data[static_cast<std::size_t>(c)]) +
                                    kBnEps);
                const double g = static_cast<double>(gamma.data[static_cast<std::size_t>(c)]);
                const double bt = static_cast<double>(beta.data[static_cast<std::size_t>(c)]);
                for (int n = 0; n < N; ++n) {
                    const T* ip = x.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
                    T* op = y.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i)
                        op[i] = static_cast<T>(
                            g * ((static_cast<double>(ip[i]) - mean) * inv) + bt);
                }
            }
            return y;
        }
        xhat_cache = Tensor<T>(x.shape);
        inv_std_cache.assign(static_cast<std::size_t>(C), 0.0);
        for (int c = 0; c < C; ++c) {
            double sum = 0.0;
            for (int n = 0; n < N; ++n) {
                const T* ip = x.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) sum += static_cast<double>(ip[i]);
            }
            const double mean = sum / static_cast<double>(m);
            double vsum = 0.0;
            for (int n = 0; n < N; ++n) {
                const T* ip = x.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = static_cast<double>(ip[i]) - mean;
                    vsum += d * d;
                }
            }
            const double var = vsum / static_cast<double>(m);  // biased
            const double inv = 1.0 / std::sqrt(var + kBnEps);
            inv_std_cache[static_cast<std::size_t>(c)] = inv;
            const double g = static_cast<double>(gamma.data[static_cast<std::size_t>(c)]);
            const double bt = static_cast<double>(beta.data[static_cast<std::size_t>(c)]);
            for (int n = 0; n < N; ++n) {
                const T* ip = x.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
                T* xh = xhat_cache.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
                T* op = y.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double v = (static_cast<double>(ip[i]) - mean) * inv;
                    xh[i] = static_cast<T>(v);
                    op[i] = static_cast<T>(g * v + bt);
                }
            }
            if (stats_initialized) {
                run_mean.data[static_cast<std::size_t>(c)] = static_cast<T>(
                    kBnMomentum * static_cast<double>(run_mean.data[static_cast<std::size_t>(c)]) +
                    (1.0 - kBnMomentum) * mean);
                run_var.data[static_cast<std::size_t>(c)] = static_cast<T>(
                    kBnMomentum * static_cast<double>(run_var.data[static_cast<std::size_t>(c)]) +
                    (1.0 - kBnMomentum) * var);
            } else {
                run_mean.data[static_cast<std::size_t>(c)] = static_cast<T>(mean);
                run_var.data[static_cast<std::size_t>(c)] = static_cast<T>(var);
            }
        }
        stats_initialized = true;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        if (xhat_cache.empty())
            throw Error("BatchNorm::backward called without a cached forward pass");
        const int N = gy.dim(0), C = channels, H = gy.dim(2), W = gy.dim(3);
        const std::size_t plane = static_cast<std::size_t>(H) * W;
        const double m = static_cast<double>(static_cast<std::size_t>(N) * plane);
        Tensor<T> gx(gy.shape);
        for (int c = 0; c < C; ++c) {
            double sum_gy = 0.0, sum_gy_xhat = 0.0;
            for (int n = 0; n < N; ++n) {
                const T* gp = gy.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
                const T* xh = xhat_cache.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_gy += static_cast<double>(gp[i]);
                    sum_gy_xhat += static_cast<double>(gp[i]) * static_cast<double>(xh[i]);
                }
            }
            ggamma.data[static_cast<std::size_t>(c)] += static_cast<T>(sum_gy_xhat);
            gbeta.data[static_cast<std::size_t>(c)] += static_cast<T>(sum_gy);
            const double g = static_cast<double>(gamma.data[static_cast<std::size_t>(c)]);
            const double inv = inv_std_cache[static_cast<std::size_t>(c)];
            const double k = g * inv / m;
            for (int n = 0; n < N; ++n) {
                const T* gp = gy.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
                const T* xh = xhat_cache.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
                T* op = gx.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i)
                    op[i] = static_cast<T>(
                        k * (m * static_cast<double>(gp[i]) - sum_gy -
                             static_cast<double>(xh[i]) * sum_gy_xhat));
            }
        }
        xhat_cache = Tensor<T>{};
        inv_std_cache.clear();
        return gx;
    }
};

// Channel concatenation: output channels are a's then b's.
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    require_4d(a, "concat_channels");
    require_4d(b, "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw DimensionError("concat_channels: shapes " + shape_str(a) + " and " + shape_str(b) +
                             " differ outside the channel dim");
    const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    Tensor<T> y({N, Ca + Cb, H, W});
    for (int n = 0; n < N; ++n) {
        std::copy(a.ptr() + static_cast<std::size_t>(n) * Ca * plane,
                  a.ptr() + static_cast<std::size_t>(n + 1) * Ca * plane,
                  y.ptr() + static_cast<std::size_t>(n) * (Ca + Cb) * plane);
        std::copy(b.ptr() + static_cast<std::size_t>(n) * Cb * plane,
                  b.ptr() + static_cast<std::size_t>(n + 1) * Cb * plane,
                  y.ptr() + (static_cast<std::size_t>(n) * (Ca + Cb) + Ca) * plane);
    }
    return y;
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& gy, int ca, int cb) {
    require_4d(gy, "split_channels");
    if (gy.dim(1) != ca + cb)
        throw DimensionError("split_channels: channel count mismatch");
    const int N = gy.dim(0), H = gy.dim(2), W = gy.dim(3);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    Tensor<T> ga({N, ca, H, W}), gb({N, cb, H, W});
    for (int n = 0; n < N; ++n) {
        std::copy(gy.ptr() + static_cast<std::size_t>(n) * (ca + cb) * plane,
                  gy.ptr() + (static_cast<std::size_t>(n) * (ca + cb) + ca) * plane,
                  ga.ptr() + static_cast<std::size_t>(n) * ca * plane);
        std::copy(gy.ptr() + (static_cast<std::size_t>(n) * (ca + cb) + ca) * plane,
                  gy.ptr() + static_cast<std::size_t>(n + 1) * (ca + cb) * plane,
                  gb.ptr() + static_cast<std::size_t>(n) * cb * plane);
    }
    return {std::move(ga), std::move(gb)};
}

// Mean squared error over all elements; the gradient w.r.t. pred is
// 2 (pred - target) / count.
template <class T>
double mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (!pred.same_shape(target))
        throw DimensionError("mse_loss: shape mismatch " + shape_str(pred) + " vs " +
                             shape_str(target));
    if (pred.empty()) throw DimensionError("mse_loss: empty tensors");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

template <class T>
Tensor<T> mse_grad(const Tensor<T>& pred, const Tensor<T>& target) {
    if (!pred.same_shape(target))
        throw DimensionError("mse_grad: shape mismatch");
    Tensor<T> g(pred.shape);
    const double scale = 2.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
        g.data[i] = static_cast<T>(
            scale * (static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i])));
    return g;
}

}  // namespace itm::nn
