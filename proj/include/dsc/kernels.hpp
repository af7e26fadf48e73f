#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dsc {

/// Batched activation stored channel-major: element (c, n, y, x) lives at
/// ((c * batch + n) * height + y) * width + x. With this layout a
/// convolution's output is exactly the row-major product W * im2col(x).
struct FeatureMap {
    int channels = 0;
    int batch = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int c, int n, int h, int w) : channels(c), batch(n), height(h), width(w), data(std::size_t(c) * n * h * w, 0.0) {}

    std::size_t size() const { return data.size(); }
    std::size_t plane() const { return std::size_t(height) * width; }
    double& at(int c, int n, int y, int x) { return data[((std::size_t(c) * batch + n) * height + y) * width + x]; }
    double at(int c, int n, int y, int x) const { return data[((std::size_t(c) * batch + n) * height + y) * width + x]; }
    bool same_shape(const FeatureMap& o) const {
        return channels == o.channels && batch == o.batch && height == o.height && width == o.width;
    }
};

/// Geometry of a square-kernel 2-D convolution.
struct ConvShape {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 1;

    int out_extent(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
    int patch_size() const { return in_channels * kernel * kernel; }
};

struct ConvGrads {
    FeatureMap input;
    std::vector<double> weight;
    std::vector<double> bias;
};

// Weights are row-major out_channels x (in_channels * k * k), index
// (co, ci, ky, kx).

/// OpenMP kernels: im2col is parallel over samples, the contraction is one
/// single-threaded GEMM, so results do not depend on the thread count.
namespace kernels {

FeatureMap conv2d_forward(const FeatureMap& in, std::span<const double> weight, std::span<const double> bias,
                          const ConvShape& shape);
ConvGrads conv2d_backward(const FeatureMap& in, std::span<const double> weight, const FeatureMap& grad_out,
                          const ConvShape& shape);

FeatureMap upsample2x_forward(const FeatureMap& in);
FeatureMap upsample2x_backward(const FeatureMap& grad_out);

void leaky_relu_forward(std::span<double> x, double slope);
/// `pre` is the activation input; grad is modified in place.
void leaky_relu_backward(std::span<const double> pre, std::span<double> grad, double slope);
void sigmoid_forward(std::span<double> x);
/// `out` is the sigmoid output.
void sigmoid_backward(std::span<const double> out, std::span<double> grad);

}  // namespace kernels

/// Direct serial loops. Kept as the oracle for the parallel kernels and as
/// the baseline in the benchmark.
namespace reference {

FeatureMap conv2d_forward(const FeatureMap& in, std::span<const double> weight, std::span<const double> bias,
                          const ConvShape& shape);
ConvGrads conv2d_backward(const FeatureMap& in, std::span<const double> weight, const FeatureMap& grad_out,
                          const ConvShape& shape);
FeatureMap upsample2x_forward(const FeatureMap& in);
FeatureMap upsample2x_backward(const FeatureMap& grad_out);

}  // namespace reference

}  // namespace dsc
