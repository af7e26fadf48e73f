#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsc/kernels.hpp"

namespace dsc {

/// One image, channel-major (c, y, x), values in [0, 1].
struct ImageSample {
    int channels = 3;
    int height = 32;
    int width = 32;
    std::vector<double> pixels;

    ImageSample() = default;
    ImageSample(int c, int h, int w) : channels(c), height(h), width(w), pixels(std::size_t(c) * h * w, 0.0) {}
    std::size_t size() const { return pixels.size(); }
};

/// Encoder output / channel payload. Even length so the halves pair into I/Q.
struct SemanticVector {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    double mean_square() const;
};

/// Row-major count x dim block of latent vectors.
struct LatentBatch {
    int count = 0;
    int dim = 0;
    std::vector<double> values;

    LatentBatch() = default;
    LatentBatch(int n, int d) : count(n), dim(d), values(std::size_t(n) * d, 0.0) {}
    std::span<double> row(int n) { return {values.data() + std::size_t(n) * dim, std::size_t(dim)}; }
    std::span<const double> row(int n) const { return {values.data() + std::size_t(n) * dim, std::size_t(dim)}; }
};

/// raw * sqrt(d / sum raw_i^2). Throws DegenerateInputError on an all-zero input.
SemanticVector power_normalize(std::span<const double> raw);
/// Vector-Jacobian product of power_normalize. `normalized` is its output,
/// `raw_norm` the Euclidean norm of the input.
void power_normalize_backward(std::span<const double> normalized, double raw_norm, std::span<const double> grad_out,
                              std::span<double> grad_in);

/// Layer sizes of the convolutional encoder / mirrored decoder. Fully
/// determines every parameter shape.
struct Architecture {
    int channels = 3;
    int height = 32;
    int width = 32;
    int hidden1 = 16;
    int hidden2 = 32;
    int latent_channels = 32;
    double leaky_slope = 0.2;

    int latent_height() const { return height / 8; }
    int latent_width() const { return width / 8; }
    int latent_dim() const { return latent_channels * latent_height() * latent_width(); }
    void validate() const;
    bool operator==(const Architecture&) const = default;
};

struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<double> value;
};

/// Ordered trainable arrays. Order is part of the checkpoint format.
struct ParameterSet {
    std::vector<Param> params;

    std::size_t index_of(const std::string& name) const;
    std::size_t total_size() const;
    bool operator==(const ParameterSet&) const;
};

/// Per-parameter gradient buffers aligned with a ParameterSet.
using Gradients = std::vector<std::vector<double>>;
Gradients zero_gradients(const ParameterSet& params);

/// Intermediate activations kept for the backward pass.
struct EncoderTape {
    std::vector<FeatureMap> conv_inputs;
    std::vector<FeatureMap> pre_activations;
    std::vector<double> raw_norms;
    LatentBatch normalized;
};

struct DecoderTape {
    FeatureMap latent_map;
    std::vector<FeatureMap> conv_inputs;
    std::vector<FeatureMap> pre_activations;
    FeatureMap output;
};

/// Strided-convolution encoder and upsample+conv decoder with a sigmoid output.
class LatentModel {
public:
    LatentModel(const Architecture& arch, std::uint64_t init_seed);
    LatentModel(const Architecture& arch, ParameterSet params);

    const Architecture& architecture() const { return arch_; }
    const ParameterSet& params() const { return params_; }
    ParameterSet& params() { return params_; }

    LatentBatch encode_batch(const FeatureMap& images, EncoderTape* tape = nullptr) const;
    FeatureMap decode_batch(const LatentBatch& latents, DecoderTape* tape = nullptr) const;

    /// Accumulates parameter gradients into `grads`; returns d(loss)/d(images).
    FeatureMap encode_backward(const EncoderTape& tape, const LatentBatch& grad_latent, Gradients& grads) const;
    /// Accumulates parameter gradients into `grads`; returns d(loss)/d(latent).
    LatentBatch decode_backward(const DecoderTape& tape, const FeatureMap& grad_images, Gradients& grads) const;

    SemanticVector encode(const ImageSample& image) const;
    ImageSample decode(const SemanticVector& latent) const;

private:
    struct ConvLayer {
        ConvShape shape;
        std::size_t weight = 0;
        std::size_t bias = 0;
    };

    void build_layers();
    void check_image_shape(int c, int h, int w) const;

    Architecture arch_;
    ParameterSet params_;
    std::vector<ConvLayer> encoder_;
    std::vector<ConvLayer> decoder_;
};

/// Packs images into a channel-major batch and back.
FeatureMap to_batch(std::span<const ImageSample> images);
ImageSample from_batch(const FeatureMap& batch, int n);

}  // namespace dsc
