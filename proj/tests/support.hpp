#pragma once

#include <cmath>
#include <vector>

#include "dsc/latent_model.hpp"
#include "dsc/rng.hpp"

namespace dsc::test {

inline FeatureMap random_map(int c, int n, int h, int w, std::uint64_t seed, double scale = 1.0) {
    FeatureMap m(c, n, h, w);
    Rng rng(seed);
    for (auto& v : m.data) v = rng.uniform(-scale, scale);
    return m;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    Rng rng(seed);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

inline double rel_err(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1e-8, std::max(std::abs(analytic), std::abs(numeric)));
}

/// Small network for gradient checks: 8x8 images, 1x1 latent grid.
inline Architecture tiny_arch() {
    Architecture a;
    a.height = 8;
    a.width = 8;
    a.hidden1 = 4;
    a.hidden2 = 6;
    a.latent_channels = 8;
    return a;
}

inline std::vector<ImageSample> random_images(int n, const Architecture& a, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<ImageSample> out;
    for (int k = 0; k < n; ++k) {
        ImageSample im(a.channels, a.height, a.width);
        for (auto& p : im.pixels) p = rng.uniform();
        out.push_back(std::move(im));
    }
    return out;
}

}  // namespace dsc::test
