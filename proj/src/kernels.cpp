#include "dsc/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace dsc::kernels {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;

// Eigen-owned (aligned) copy of a row-major buffer.
RowMatrix aligned_copy(std::span<const double> v, Eigen::Index rows, Eigen::Index cols) {
    return ConstMap(v.data(), rows, cols);
}

// cols is patch_size x (batch * out_h * out_w), row-major.
RowMatrix im2col(const FeatureMap& in, const ConvShape& s, int out_h, int out_w) {
    const std::size_t out_plane = std::size_t(out_h) * out_w;
    const std::size_t cols_w = std::size_t(in.batch) * out_plane;
    RowMatrix cols(s.patch_size(), Eigen::Index(cols_w));
#pragma omp parallel for schedule(static)
    for (int n = 0; n < in.batch; ++n) {
        for (int ci = 0; ci < in.channels; ++ci) {
            for (int ky = 0; ky < s.kernel; ++ky) {
                for (int kx = 0; kx < s.kernel; ++kx) {
                    const std::size_t row = (std::size_t(ci) * s.kernel + ky) * s.kernel + kx;
                    double* dst = cols.data() + row * cols_w + n * out_plane;
                    for (int oy = 0; oy < out_h; ++oy) {
                        const int iy = oy * s.stride - s.pad + ky;
                        if (iy < 0 || iy >= in.height) {
                            for (int ox = 0; ox < out_w; ++ox) dst[oy * out_w + ox] = 0.0;
                            continue;
                        }
                        const double* src = &in.data[((std::size_t(ci) * in.batch + n) * in.height + iy) * in.width];
                        for (int ox = 0; ox < out_w; ++ox) {
                            const int ix = ox * s.stride - s.pad + kx;
                            dst[oy * out_w + ox] = (ix >= 0 && ix < in.width) ? src[ix] : 0.0;
                        }
                    }
                }
            }
        }
    }
    return cols;
}

void col2im(const RowMatrix& cols, FeatureMap& grad_in, const ConvShape& s, int out_h, int out_w) {
    const std::size_t out_plane = std::size_t(out_h) * out_w;
    const std::size_t cols_w = std::size_t(grad_in.batch) * out_plane;
#pragma omp parallel for schedule(static)
    for (int n = 0; n < grad_in.batch; ++n) {
        for (int ci = 0; ci < grad_in.channels; ++ci) {
            for (int ky = 0; ky < s.kernel; ++ky) {
                for (int kx = 0; kx < s.kernel; ++kx) {
                    const std::size_t row = (std::size_t(ci) * s.kernel + ky) * s.kernel + kx;
                    const double* src = cols.data() + row * cols_w + n * out_plane;
                    for (int oy = 0; oy < out_h; ++oy) {
                        const int iy = oy * s.stride - s.pad + ky;
                        if (iy < 0 || iy >= grad_in.height) continue;
                        double* dst =
                            &grad_in.data[((std::size_t(ci) * grad_in.batch + n) * grad_in.height + iy) * grad_in.width];
                        for (int ox = 0; ox < out_w; ++ox) {
                            const int ix = ox * s.stride - s.pad + kx;
                            if (ix >= 0 && ix < grad_in.width) dst[ix] += src[oy * out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

FeatureMap conv2d_forward(const FeatureMap& in, std::span<const double> weight, std::span<const double> bias,
                          const ConvShape& s) {
    const int out_h = s.out_extent(in.height);
    const int out_w = s.out_extent(in.width);
    FeatureMap out(s.out_channels, in.batch, out_h, out_w);
    const auto cols = im2col(in, s, out_h, out_w);
    const Eigen::Index p = Eigen::Index(in.batch) * out_h * out_w;
    const RowMatrix w = aligned_copy(weight, s.out_channels, s.patch_size());
    RowMatrix o(s.out_channels, p);
    o.noalias() = w * cols;
    for (int co = 0; co < s.out_channels; ++co) o.row(co).array() += bias[co];
    std::copy(o.data(), o.data() + o.size(), out.data.begin());
    return out;
}

ConvGrads conv2d_backward(const FeatureMap& in, std::span<const double> weight, const FeatureMap& grad_out,
                          const ConvShape& s) {
    const int out_h = grad_out.height;
    const int out_w = grad_out.width;
    const Eigen::Index p = Eigen::Index(in.batch) * out_h * out_w;
    const auto cols = im2col(in, s, out_h, out_w);

    ConvGrads g;
    g.weight.assign(weight.size(), 0.0);
    g.bias.assign(s.out_channels, 0.0);
    const RowMatrix w = aligned_copy(weight, s.out_channels, s.patch_size());
    const RowMatrix go = aligned_copy(grad_out.data, s.out_channels, p);
    RowMatrix gw(s.out_channels, s.patch_size());
    gw.noalias() = go * cols.transpose();
    std::copy(gw.data(), gw.data() + gw.size(), g.weight.begin());
    for (int co = 0; co < s.out_channels; ++co) {
        double acc = 0.0;
        for (Eigen::Index k = 0; k < p; ++k) acc += go(co, k);
        g.bias[co] = acc;
    }

    RowMatrix grad_cols(s.patch_size(), p);
    grad_cols.noalias() = w.transpose() * go;
    g.input = FeatureMap(in.channels, in.batch, in.height, in.width);
    col2im(grad_cols, g.input, s, out_h, out_w);
    return g;
}

FeatureMap upsample2x_forward(const FeatureMap& in) {
    FeatureMap out(in.channels, in.batch, in.height * 2, in.width * 2);
    const int planes = in.channels * in.batch;
#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const double* src = &in.data[std::size_t(pl) * in.plane()];
        double* dst = &out.data[std::size_t(pl) * out.plane()];
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) dst[y * out.width + x] = src[(y / 2) * in.width + x / 2];
    }
    return out;
}

FeatureMap upsample2x_backward(const FeatureMap& grad_out) {
    FeatureMap g(grad_out.channels, grad_out.batch, grad_out.height / 2, grad_out.width / 2);
    const int planes = g.channels * g.batch;
#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const double* src = &grad_out.data[std::size_t(pl) * grad_out.plane()];
        double* dst = &g.data[std::size_t(pl) * g.plane()];
        for (int y = 0; y < g.height; ++y) {
            for (int x = 0; x < g.width; ++x) {
                const double* s = src + (2 * y) * grad_out.width + 2 * x;
                dst[y * g.width + x] = (s[0] + s[1]) + (s[grad_out.width] + s[grad_out.width + 1]);
            }
        }
    }
    return g;
}

void leaky_relu_forward(std::span<double> x, double slope) {
    const std::ptrdiff_t n = std::ptrdiff_t(x.size());
#pragma omp parallel for simd schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void leaky_relu_backward(std::span<const double> pre, std::span<double> grad, double slope) {
    const std::ptrdiff_t n = std::ptrdiff_t(grad.size());
#pragma omp parallel for simd schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) grad[i] = pre[i] > 0.0 ? grad[i] : slope * grad[i];
}

void sigmoid_forward(std::span<double> x) {
    const std::ptrdiff_t n = std::ptrdiff_t(x.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) x[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void sigmoid_backward(std::span<const double> out, std::span<double> grad) {
    const std::ptrdiff_t n = std::ptrdiff_t(grad.size());
#pragma omp parallel for simd schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) grad[i] *= out[i] * (1.0 - out[i]);
}

}  // namespace dsc::kernels
