#include "dsc/kernels.hpp"

namespace dsc::reference {

FeatureMap conv2d_forward(const FeatureMap& in, std::span<const double> weight, std::span<const double> bias,
                          const ConvShape& s) {
    const int out_h = s.out_extent(in.height);
    const int out_w = s.out_extent(in.width);
    FeatureMap out(s.out_channels, in.batch, out_h, out_w);
    for (int co = 0; co < s.out_channels; ++co) {
        for (int n = 0; n < in.batch; ++n) {
            for (int oy = 0; oy < out_h; ++oy) {
                for (int ox = 0; ox < out_w; ++ox) {
                    double acc = bias[co];
                    for (int ci = 0; ci < s.in_channels; ++ci) {
                        for (int ky = 0; ky < s.kernel; ++ky) {
                            const int iy = oy * s.stride - s.pad + ky;
                            if (iy < 0 || iy >= in.height) continue;
                            for (int kx = 0; kx < s.kernel; ++kx) {
                                const int ix = ox * s.stride - s.pad + kx;
                                if (ix < 0 || ix >= in.width) continue;
                                acc += weight[((std::size_t(co) * s.in_channels + ci) * s.kernel + ky) * s.kernel + kx] *
                                       in.at(ci, n, iy, ix);
                            }
                        }
                    }
                    out.at(co, n, oy, ox) = acc;
                }
            }
        }
    }
    return out;
}

ConvGrads conv2d_backward(const FeatureMap& in, std::span<const double> weight, const FeatureMap& grad_out,
                          const ConvShape& s) {
    ConvGrads g;
    g.input = FeatureMap(in.channels, in.batch, in.height, in.width);
    g.weight.assign(weight.size(), 0.0);
    g.bias.assign(s.out_channels, 0.0);
    for (int co = 0; co < s.out_channels; ++co) {
        for (int n = 0; n < in.batch; ++n) {
            for (int oy = 0; oy < grad_out.height; ++oy) {
                for (int ox = 0; ox < grad_out.width; ++ox) {
                    const double go = grad_out.at(co, n, oy, ox);
                    g.bias[co] += go;
                    for (int ci = 0; ci < s.in_channels; ++ci) {
                        for (int ky = 0; ky < s.kernel; ++ky) {
                            const int iy = oy * s.stride - s.pad + ky;
                            if (iy < 0 || iy >= in.height) continue;
                            for (int kx = 0; kx < s.kernel; ++kx) {
                                const int ix = ox * s.stride - s.pad + kx;
                                if (ix < 0 || ix >= in.width) continue;
                                const std::size_t wi = ((std::size_t(co) * s.in_channels + ci) * s.kernel + ky) * s.kernel + kx;
                                g.weight[wi] += go * in.at(ci, n, iy, ix);
                                g.input.at(ci, n, iy, ix) += go * weight[wi];
                            }
                        }
                    }
                }
            }
        }
    }
    return g;
}

FeatureMap upsample2x_forward(const FeatureMap& in) {
    FeatureMap out(in.channels, in.batch, in.height * 2, in.width * 2);
    for (int c = 0; c < in.channels; ++c)
        for (int n = 0; n < in.batch; ++n)
            for (int y = 0; y < out.height; ++y)
                for (int x = 0; x < out.width; ++x) out.at(c, n, y, x) = in.at(c, n, y / 2, x / 2);
    return out;
}

FeatureMap upsample2x_backward(const FeatureMap& grad_out) {
    FeatureMap g(grad_out.channels, grad_out.batch, grad_out.height / 2, grad_out.width / 2);
    for (int c = 0; c < grad_out.channels; ++c)
        for (int n = 0; n < grad_out.batch; ++n)
            for (int y = 0; y < grad_out.height; ++y)
                for (int x = 0; x < grad_out.width; ++x) g.at(c, n, y / 2, x / 2) += grad_out.at(c, n, y, x);
    return g;
}

}  // namespace dsc::reference
