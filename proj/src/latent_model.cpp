#include "dsc/latent_model.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "dsc/errors.hpp"

namespace dsc {

double SemanticVector::mean_square() const {
    if (values.empty()) return 0.0;
    double s = 0.0;
    for (double v : values) s += v * v;
    return s / double(values.size());
}

SemanticVector power_normalize(std::span<const double> raw) {
    double sq = 0.0;
    for (double v : raw) sq += v * v;
    if (!(sq > 0.0)) throw DegenerateInputError("power_normalize: input has zero energy");
    if (!std::isfinite(sq)) throw DegenerateInputError("power_normalize: non-finite input");
    const double scale = std::sqrt(double(raw.size()) / sq);
    SemanticVector out;
    out.values.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out.values[i] = raw[i] * scale;
    return out;
}

void power_normalize_backward(std::span<const double> normalized, double raw_norm, std::span<const double> grad_out,
                              std::span<double> grad_in) {
    // y = sqrt(d) x / |x|  =>  J^T g = (sqrt(d)/|x|) (g - (y.g / d) y)
    const double d = double(normalized.size());
    double dot = 0.0;
    for (std::size_t i = 0; i < normalized.size(); ++i) dot += normalized[i] * grad_out[i];
    const double scale = std::sqrt(d) / raw_norm;
    for (std::size_t i = 0; i < normalized.size(); ++i)
        grad_in[i] = scale * (grad_out[i] - dot / d * normalized[i]);
}

void Architecture::validate() const {
    if (channels <= 0 || hidden1 <= 0 || hidden2 <= 0 || latent_channels <= 0)
        throw ConfigError("architecture: channel counts must be positive");
    if (height <= 0 || width <= 0 || height % 8 != 0 || width % 8 != 0)
        throw ConfigError("architecture: image extent must be a positive multiple of 8");
    if (latent_dim() % 2 != 0) throw ConfigError("architecture: latent dimension must be even");
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("architecture: leaky_slope must be in [0, 1)");
}

std::size_t ParameterSet::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].name == name) return i;
    throw ConfigError("parameter not found: " + name);
}

std::size_t ParameterSet::total_size() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
}

bool ParameterSet::operator==(const ParameterSet& o) const {
    if (params.size() != o.params.size()) return false;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& a = params[i];
        const auto& b = o.params[i];
        if (a.name != b.name || a.shape != b.shape || a.value != b.value) return false;
    }
    return true;
}

Gradients zero_gradients(const ParameterSet& params) {
    Gradients g;
    g.reserve(params.params.size());
    for (const auto& p : params.params) g.emplace_back(p.value.size(), 0.0);
    return g;
}

namespace {

struct LayerSpec {
    const char* name;
    ConvShape shape;
};

std::vector<LayerSpec> layer_specs(const Architecture& a) {
    return {
        {"enc.conv1", {a.channels, a.hidden1, 3, 2, 1}},
        {"enc.conv2", {a.hidden1, a.hidden2, 3, 2, 1}},
        {"enc.conv3", {a.hidden2, a.latent_channels, 3, 2, 1}},
        {"dec.conv1", {a.latent_channels, a.hidden2, 3, 1, 1}},
        {"dec.conv2", {a.hidden2, a.hidden1, 3, 1, 1}},
        {"dec.conv3", {a.hidden1, a.channels, 3, 1, 1}},
    };
}

void accumulate(std::vector<double>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

LatentModel::LatentModel(const Architecture& arch, std::uint64_t init_seed) : arch_(arch) {
    arch_.validate();
    std::mt19937_64 engine(init_seed);
    for (const auto& spec : layer_specs(arch_)) {
        const auto& s = spec.shape;
        const double stddev = std::sqrt(2.0 / double(s.patch_size()));
        std::normal_distribution<double> weight_dist(0.0, stddev);
        std::uniform_real_distribution<double> bias_dist(-0.01, 0.01);
        Param w{std::string(spec.name) + ".weight", {s.out_channels, s.in_channels, s.kernel, s.kernel}, {}};
        w.value.resize(std::size_t(s.out_channels) * s.patch_size());
        for (auto& v : w.value) v = weight_dist(engine);
        Param b{std::string(spec.name) + ".bias", {s.out_channels}, std::vector<double>(s.out_channels)};
        // Non-zero biases keep an all-zero image away from the degenerate
        // zero latent.
        for (auto& v : b.value) v = bias_dist(engine);
        params_.params.push_back(std::move(w));
        params_.params.push_back(std::move(b));
    }
    build_layers();
}

LatentModel::LatentModel(const Architecture& arch, ParameterSet params) : arch_(arch), params_(std::move(params)) {
    arch_.validate();
    build_layers();
}

void LatentModel::build_layers() {
    const auto specs = layer_specs(arch_);
    if (params_.params.size() != specs.size() * 2)
        throw ConfigError("model parameters do not match the architecture descriptor");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& s = specs[i].shape;
        ConvLayer layer{s, i * 2, i * 2 + 1};
        const auto& w = params_.params[layer.weight];
        const auto& b = params_.params[layer.bias];
        const std::vector<int> wshape{s.out_channels, s.in_channels, s.kernel, s.kernel};
        if (w.name != std::string(specs[i].name) + ".weight" || w.shape != wshape ||
            w.value.size() != std::size_t(s.out_channels) * s.patch_size() || b.value.size() != std::size_t(s.out_channels))
            throw ConfigError("parameter shape mismatch at " + std::string(specs[i].name));
        (i < 3 ? encoder_ : decoder_).push_back(layer);
    }
}

void LatentModel::check_image_shape(int c, int h, int w) const {
    if (c != arch_.channels || h != arch_.height || w != arch_.width)
        throw ConfigError("image shape " + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w) +
                          " does not match architecture");
}

LatentBatch LatentModel::encode_batch(const FeatureMap& images, EncoderTape* tape) const {
    check_image_shape(images.channels, images.height, images.width);
    FeatureMap x = images;
    for (std::size_t i = 0; i < encoder_.size(); ++i) {
        const auto& layer = encoder_[i];
        FeatureMap y = kernels::conv2d_forward(x, params_.params[layer.weight].value, params_.params[layer.bias].value,
                                               layer.shape);
        if (tape) tape->conv_inputs.push_back(std::move(x));
        if (i + 1 < encoder_.size()) {
            if (tape) tape->pre_activations.push_back(y);
            kernels::leaky_relu_forward(y.data, arch_.leaky_slope);
        }
        x = std::move(y);
    }

    const int n_batch = images.batch;
    const int d = arch_.latent_dim();
    const std::size_t plane = x.plane();
    LatentBatch out(n_batch, d);
    if (tape) tape->raw_norms.resize(n_batch);
    std::vector<double> raw(d);
    for (int n = 0; n < n_batch; ++n) {
        for (int c = 0; c < x.channels; ++c)
            for (std::size_t p = 0; p < plane; ++p) raw[c * plane + p] = x.data[(std::size_t(c) * n_batch + n) * plane + p];
        const auto v = power_normalize(raw);
        std::copy(v.values.begin(), v.values.end(), out.row(n).begin());
        if (tape) tape->raw_norms[n] = std::sqrt(std::inner_product(raw.begin(), raw.end(), raw.begin(), 0.0));
    }
    if (tape) tape->normalized = out;
    return out;
}

FeatureMap LatentModel::encode_backward(const EncoderTape& tape, const LatentBatch& grad_latent, Gradients& grads) const {
    const int n_batch = grad_latent.count;
    const int d = arch_.latent_dim();
    FeatureMap g(arch_.latent_channels, n_batch, arch_.latent_height(), arch_.latent_width());
    const std::size_t plane = g.plane();
    std::vector<double> grad_raw(d);
    for (int n = 0; n < n_batch; ++n) {
        power_normalize_backward(tape.normalized.row(n), tape.raw_norms[n], grad_latent.row(n), grad_raw);
        for (int c = 0; c < g.channels; ++c)
            for (std::size_t p = 0; p < plane; ++p) g.data[(std::size_t(c) * n_batch + n) * plane + p] = grad_raw[c * plane + p];
    }
    for (std::size_t i = encoder_.size(); i-- > 0;) {
        const auto& layer = encoder_[i];
        if (i + 1 < encoder_.size()) kernels::leaky_relu_backward(tape.pre_activations[i].data, g.data, arch_.leaky_slope);
        auto cg = kernels::conv2d_backward(tape.conv_inputs[i], params_.params[layer.weight].value, g, layer.shape);
        accumulate(grads[layer.weight], cg.weight);
        accumulate(grads[layer.bias], cg.bias);
        g = std::move(cg.input);
    }
    return g;
}

FeatureMap LatentModel::decode_batch(const LatentBatch& latents, DecoderTape* tape) const {
    const int d = arch_.latent_dim();
    if (latents.dim != d)
        throw ConfigError("latent length " + std::to_string(latents.dim) + " does not match architecture dimension " +
                          std::to_string(d));
    const int n_batch = latents.count;
    FeatureMap x(arch_.latent_channels, n_batch, arch_.latent_height(), arch_.latent_width());
    const std::size_t plane = x.plane();
    for (int n = 0; n < n_batch; ++n) {
        const auto row = latents.row(n);
        for (int c = 0; c < x.channels; ++c)
            for (std::size_t p = 0; p < plane; ++p) x.data[(std::size_t(c) * n_batch + n) * plane + p] = row[c * plane + p];
    }
    if (tape) tape->latent_map = x;
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
        const auto& layer = decoder_[i];
        FeatureMap up = kernels::upsample2x_forward(x);
        FeatureMap y = kernels::conv2d_forward(up, params_.params[layer.weight].value, params_.params[layer.bias].value,
                                               layer.shape);
        if (tape) tape->conv_inputs.push_back(std::move(up));
        if (i + 1 < decoder_.size()) {
            if (tape) tape->pre_activations.push_back(y);
            kernels::leaky_relu_forward(y.data, arch_.leaky_slope);
        } else {
            kernels::sigmoid_forward(y.data);
        }
        x = std::move(y);
    }
    if (tape) tape->output = x;
    return x;
}

LatentBatch LatentModel::decode_backward(const DecoderTape& tape, const FeatureMap& grad_images, Gradients& grads) const {
    FeatureMap g = grad_images;
    kernels::sigmoid_backward(tape.output.data, g.data);
    for (std::size_t i = decoder_.size(); i-- > 0;) {
        const auto& layer = decoder_[i];
        if (i + 1 < decoder_.size()) kernels::leaky_relu_backward(tape.pre_activations[i].data, g.data, arch_.leaky_slope);
        auto cg = kernels::conv2d_backward(tape.conv_inputs[i], params_.params[layer.weight].value, g, layer.shape);
        accumulate(grads[layer.weight], cg.weight);
        accumulate(grads[layer.bias], cg.bias);
        g = kernels::upsample2x_backward(cg.input);
    }
    const int n_batch = g.batch;
    LatentBatch out(n_batch, arch_.latent_dim());
    const std::size_t plane = g.plane();
    for (int n = 0; n < n_batch; ++n) {
        auto row = out.row(n);
        for (int c = 0; c < g.channels; ++c)
            for (std::size_t p = 0; p < plane; ++p) row[c * plane + p] = g.data[(std::size_t(c) * n_batch + n) * plane + p];
    }
    return out;
}

SemanticVector LatentModel::encode(const ImageSample& image) const {
    check_image_shape(image.channels, image.height, image.width);
    const auto batch = encode_batch(to_batch(std::span<const ImageSample>(&image, 1)));
    SemanticVector v;
    v.values = batch.values;
    return v;
}

ImageSample LatentModel::decode(const SemanticVector& latent) const {
    if (int(latent.size()) != arch_.latent_dim())
        throw ConfigError("latent length does not match architecture dimension");
    LatentBatch b(1, arch_.latent_dim());
    b.values = latent.values;
    return from_batch(decode_batch(b), 0);
}

FeatureMap to_batch(std::span<const ImageSample> images) {
    if (images.empty()) throw ConfigError("empty image batch");
    const auto& first = images.front();
    FeatureMap out(first.channels, int(images.size()), first.height, first.width);
    const std::size_t plane = out.plane();
    for (std::size_t n = 0; n < images.size(); ++n) {
        const auto& im = images[n];
        if (im.channels != first.channels || im.height != first.height || im.width != first.width)
            throw ConfigError("images in a batch must share one shape");
        for (int c = 0; c < im.channels; ++c)
            std::copy_n(im.pixels.begin() + std::ptrdiff_t(c * plane), plane,
                        out.data.begin() + std::ptrdiff_t((std::size_t(c) * out.batch + n) * plane));
    }
    return out;
}

ImageSample from_batch(const FeatureMap& batch, int n) {
    ImageSample im(batch.channels, batch.height, batch.width);
    const std::size_t plane = batch.plane();
    for (int c = 0; c < batch.channels; ++c)
        std::copy_n(batch.data.begin() + std::ptrdiff_t((std::size_t(c) * batch.batch + n) * plane), plane,
                    im.pixels.begin() + std::ptrdiff_t(c * plane));
    return im;
}

}  // namespace dsc
