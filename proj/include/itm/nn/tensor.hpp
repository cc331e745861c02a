#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "itm/errors.hpp"

namespace itm::nn {

// Dense row-major tensor. Activations use (N, C, H, W); convolution
// weights (K, C, kh, kw); per-channel vectors (C).
template <class T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), T(0)) {}

    static std::size_t count(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw DimensionError("tensor dimensions must be positive");
            n *= static_cast<std::size_t>(d);
        }
        return s.empty() ? 0 : n;
    }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }
};

template <class T>
std::string shape_str(const Tensor<T>& t) {
    std::string s = "(";
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(t.shape[i]);
    }
    return s + ")";
}

template <class T>
void require_4d(const Tensor<T>& t, const char* where) {
    if (t.ndim() != 4)
        throw DimensionError(std::string(where) + ": expected a 4-d (N,C,H,W) tensor, got " +
                             shape_str(t));
}

}  // namespace itm::nn
