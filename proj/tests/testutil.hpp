#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "itm/image.hpp"
#include "itm/rng.hpp"

namespace testutil {

// Random radiance map whose Reinhard forward image stays strictly inside
// [0, 1): luminances are log-uniform in [lo, hi], `n_zeros` pixels are forced
// to exact zero, and per-pixel chroma ratios are bounded by 1 + 0.5/X so no
// channel ever reaches the tone curve's white point. Keeping hi/lo within a
// few decades keeps the scaled luminance X = (a/G)L far below the saturation
// guard, which makes the forward/inverse pair exact up to rounding.
inline itm::RadianceMap random_radiance(itm::Rng& rng, int width, int height,
                                        double lo, double hi, int n_zeros,
                                        double a = 0.18,
                                        double eps = itm::kDefaultEps) {
  const int n = width * height;
  std::vector<double> luma(n);
  const double log_lo = std::log(lo);
  const double log_hi = std::log(hi);
  for (int i = 0; i < n; ++i) luma[i] = std::exp(rng.uniform(log_lo, log_hi));

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = n - 1; i >= 1; --i) {
    const int j = static_cast<int>(rng.uniform_int(0, i));
    std::swap(order[i], order[j]);
  }
  for (int z = 0; z < n_zeros && z < n; ++z) luma[order[z]] = 0.0;

  double log_sum = 0.0;
  for (int i = 0; i < n; ++i) log_sum += std::log(std::max(luma[i], eps));
  const double g = std::exp(log_sum / n);

  itm::RadianceMap map(width, height);
  for (int i = 0; i < n; ++i) {
    if (luma[i] == 0.0) continue;
    const double x = a / g * luma[i];
    const double s = std::min(1.0, 0.5 / x);
    const double rho_r = 1.0 + 0.9 * s * rng.uniform(-1.0, 1.0);
    const double rho_b = 1.0 + 0.9 * s * rng.uniform(-1.0, 1.0);
    const double rho_g =
        (1.0 - itm::kLumaR * rho_r - itm::kLumaB * rho_b) / itm::kLumaG;
    map.data[3 * i + 0] = rho_r * luma[i];
    map.data[3 * i + 1] = rho_g * luma[i];
    map.data[3 * i + 2] = rho_b * luma[i];
  }
  return map;
}

inline double max_rel_error(const itm::RadianceMap& got,
                            const itm::RadianceMap& want) {
  double worst = 0.0;
  for (std::size_t i = 0; i < want.data.size(); ++i) {
    const double w = want.data[i];
    const double diff = std::abs(got.data[i] - w);
    worst = std::max(worst, w == 0.0 ? diff : diff / w);
  }
  return worst;
}

inline double rel_error(double got, double want) {
  const double diff = std::abs(got - want);
  return want == 0.0 ? diff : diff / std::abs(want);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path();
    for (int i = 0; i < 10000; ++i) {
      fs::path candidate = base / (tag + "_" + std::to_string(i));
      std::error_code ec;
      if (fs::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("could not create temp dir under " +
                             base.string());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& leaf) const {
    return (path_ / leaf).string();
  }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
