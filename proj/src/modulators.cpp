#include "dsc/modulators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dsc/errors.hpp"

namespace dsc {

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int log2_exact(int v) {
    int b = 0;
    while ((1 << b) < v) ++b;
    return b;
}

void require_same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw ConfigError(std::string(what) + ": shape mismatch");
}

}  // namespace

std::string to_string(ModulatorFamily f) {
    switch (f) {
        case ModulatorFamily::scalar: return "scalar";
        case ModulatorFamily::symbol: return "symbol";
        case ModulatorFamily::vector: return "vector";
        case ModulatorFamily::probabilistic: return "probabilistic";
    }
    return "unknown";
}

std::string to_string(GradientBridge b) {
    switch (b) {
        case GradientBridge::ste: return "ste";
        case GradientBridge::soft_to_hard: return "soft-to-hard";
        case GradientBridge::uniform_noise: return "uniform-noise";
    }
    return "unknown";
}

ModulatorFamily modulator_family_from_string(const std::string& s) {
    if (s == "scalar") return ModulatorFamily::scalar;
    if (s == "symbol") return ModulatorFamily::symbol;
    if (s == "vector") return ModulatorFamily::vector;
    if (s == "probabilistic") return ModulatorFamily::probabilistic;
    throw ConfigError("unknown modulator family: " + s);
}

GradientBridge gradient_bridge_from_string(const std::string& s) {
    if (s == "ste") return GradientBridge::ste;
    if (s == "soft-to-hard") return GradientBridge::soft_to_hard;
    if (s == "uniform-noise") return GradientBridge::uniform_noise;
    throw ConfigError("unknown gradient bridge: " + s);
}

void ModulatorConfig::validate() const {
    if (!(tau > 0.0)) throw ConfigError("modulator tau must be positive");
    if (!(beta >= 0.0)) throw ConfigError("modulator beta must be non-negative");
    switch (family) {
        case ModulatorFamily::scalar:
            if (levels < 2 || !is_power_of_two(levels)) throw ConfigError("scalar levels must be a power of two >= 2");
            if (nn_approx && bridge != GradientBridge::ste)
                throw ConfigError("the NN-approximation quantizer trains through the ste bridge only");
            break;
        case ModulatorFamily::symbol: break;
        case ModulatorFamily::vector:
            if (codebook_size < 2 || !is_power_of_two(codebook_size))
                throw ConfigError("codebook size must be a power of two >= 2");
            if (block_dim < 1) throw ConfigError("block dimension must be positive");
            if (bridge == GradientBridge::uniform_noise)
                throw ConfigError("vector quantization does not support the uniform-noise bridge");
            break;
        case ModulatorFamily::probabilistic:
            // Relaxation is the only estimator; the bridge field must keep its default.
            if (bridge != GradientBridge::ste)
                throw ConfigError("probabilistic modulation trains through Gumbel-softmax, not " + to_string(bridge));
            break;
    }
}

std::vector<IQ> pair_halves(std::span<const double> v) {
    if (v.size() % 2 != 0) throw FramingError("cannot pair an odd-length vector into I/Q symbols");
    const std::size_t half = v.size() / 2;
    std::vector<IQ> out(half);
    for (std::size_t k = 0; k < half; ++k) out[k] = {v[k], v[k + half]};
    return out;
}

std::vector<double> unpair_halves(std::span<const IQ> symbols) {
    const std::size_t half = symbols.size();
    std::vector<double> out(half * 2);
    for (std::size_t k = 0; k < half; ++k) {
        out[k] = symbols[k].i;
        out[k + half] = symbols[k].q;
    }
    return out;
}

ScalarQuantized scalar_quantize(std::span<const double> v, std::span<const double> levels) {
    if (levels.size() < 2 || !is_power_of_two(int(levels.size())))
        throw ConfigError("scalar quantizer needs a power-of-two number of levels");
    for (std::size_t k = 1; k < levels.size(); ++k)
        if (!(levels[k] > levels[k - 1])) throw ConfigError("scalar quantizer levels must be strictly increasing");
    const int bits = log2_exact(int(levels.size()));
    ScalarQuantized out;
    out.values.resize(v.size());
    out.indices.resize(v.size());
    out.bits.reserve(v.size() * bits);
    for (std::size_t e = 0; e < v.size(); ++e) {
        int best = 0;
        double best_d = std::abs(v[e] - levels[0]);
        for (int k = 1; k < int(levels.size()); ++k) {
            const double dk = std::abs(v[e] - levels[k]);
            if (dk < best_d) {
                best_d = dk;
                best = k;
            }
        }
        out.values[e] = levels[best];
        out.indices[e] = best;
        const auto g = gray_encode(std::uint32_t(best));
        for (int b = bits - 1; b >= 0; --b) out.bits.push_back(std::uint8_t((g >> b) & 1u));
    }
    return out;
}

SymbolQuantized symbol_quantize(std::span<const double> v, const Constellation& c) {
    const auto pairs = pair_halves(v);
    SymbolQuantized out;
    out.symbols.resize(pairs.size());
    std::vector<IQ> snapped(pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        out.symbols[k] = nearest_point(c, pairs[k]);
        snapped[k] = c.points[out.symbols[k]];
    }
    out.values = unpair_halves(snapped);
    return out;
}

void VQCodebook::validate() const {
    if (size < 2 || !is_power_of_two(size)) throw ConfigError("codebook size must be a power of two");
    if (dim < 1 || vectors.size() != std::size_t(size) * dim) throw ConfigError("codebook shape mismatch");
    for (double x : vectors)
        if (!std::isfinite(x)) throw ConfigError("codebook contains non-finite entries");
}

VectorQuantized vector_quantize(std::span<const double> v, const VQCodebook& cb) {
    if (cb.dim < 1 || v.size() % std::size_t(cb.dim) != 0)
        throw ConfigError("vector length is not divisible by the codebook block dimension");
    const std::size_t blocks = v.size() / cb.dim;
    VectorQuantized out;
    out.indices.resize(blocks);
    out.values.resize(v.size());
    double total = 0.0;
    for (std::size_t blk = 0; blk < blocks; ++blk) {
        const double* x = v.data() + blk * cb.dim;
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int k = 0; k < cb.size; ++k) {
            const auto w = cb.codeword(k);
            double dk = 0.0;
            for (int e = 0; e < cb.dim; ++e) dk += (x[e] - w[e]) * (x[e] - w[e]);
            if (dk < best_d) {
                best_d = dk;
                best = k;
            }
        }
        out.indices[blk] = best;
        const auto w = cb.codeword(best);
        std::copy(w.begin(), w.end(), out.values.begin() + std::ptrdiff_t(blk * cb.dim));
        total += best_d;
    }
    // Both terms share a value in the forward pass; they differ in which
    // side receives the gradient.
    out.codebook_loss = total / double(v.size());
    out.commitment_loss = out.codebook_loss;
    return out;
}

void vector_quantize_loss_backward(std::span<const double> v, const VQCodebook& cb, std::span<const int> indices,
                                   double beta, double scale, std::span<double> grad_v,
                                   std::span<double> grad_codebook) {
    const double factor = 2.0 * scale / double(v.size());
    for (std::size_t blk = 0; blk < indices.size(); ++blk) {
        const auto w = cb.codeword(indices[blk]);
        for (int e = 0; e < cb.dim; ++e) {
            const std::size_t vi = blk * cb.dim + e;
            const double diff = v[vi] - w[e];
            grad_v[vi] += factor * beta * diff;
            grad_codebook[std::size_t(indices[blk]) * cb.dim + e] += -factor * diff;
        }
    }
}

std::vector<double> bridge_ste(std::span<const double> x, std::span<const double> q) {
    require_same_size(x.size(), q.size(), "bridge_ste");
    return {q.begin(), q.end()};
}

std::vector<double> bridge_ste_backward(std::span<const double> grad_out) { return {grad_out.begin(), grad_out.end()}; }

SoftAssignment soft_assign(std::span<const double> x, std::span<const double> targets, double tau) {
    if (!(tau > 0.0)) throw ConfigError("soft assignment temperature must be positive");
    const std::size_t dim = x.size();
    if (dim == 0 || targets.size() % dim != 0) throw ConfigError("soft_assign: target shape mismatch");
    const std::size_t count = targets.size() / dim;
    std::vector<double> logits(count);
    for (std::size_t j = 0; j < count; ++j) {
        double d = 0.0;
        for (std::size_t e = 0; e < dim; ++e) d += (x[e] - targets[j * dim + e]) * (x[e] - targets[j * dim + e]);
        logits[j] = -d / tau;
    }
    SoftAssignment out;
    out.weights = softmax(logits);
    out.output.assign(dim, 0.0);
    for (std::size_t j = 0; j < count; ++j)
        for (std::size_t e = 0; e < dim; ++e) out.output[e] += out.weights[j] * targets[j * dim + e];
    return out;
}

void soft_assign_backward(std::span<const double> x, std::span<const double> targets, const SoftAssignment& fwd,
                          double tau, std::span<const double> grad_out, std::span<double> grad_x,
                          std::span<double> grad_targets) {
    const std::size_t dim = x.size();
    const std::size_t count = targets.size() / dim;
    double g_out = 0.0;
    for (std::size_t e = 0; e < dim; ++e) g_out += grad_out[e] * fwd.output[e];
    for (std::size_t j = 0; j < count; ++j) {
        const double w = fwd.weights[j];
        if (w == 0.0) continue;
        const double* t = targets.data() + j * dim;
        double g_t = 0.0;
        for (std::size_t e = 0; e < dim; ++e) g_t += grad_out[e] * t[e];
        // d(loss)/d(logit_j) = w_j (g.t_j - g.out)
        const double dlogit = w * (g_t - g_out);
        for (std::size_t e = 0; e < dim; ++e) grad_x[e] += dlogit * 2.0 * (t[e] - x[e]) / tau;
        if (!grad_targets.empty()) {
            for (std::size_t e = 0; e < dim; ++e)
                grad_targets[j * dim + e] += w * grad_out[e] + dlogit * 2.0 * (x[e] - t[e]) / tau;
        }
    }
}

std::vector<double> constellation_targets(const Constellation& c) {
    std::vector<double> t;
    t.reserve(c.points.size() * 2);
    for (const auto& p : c.points) {
        t.push_back(p.i);
        t.push_back(p.q);
    }
    return t;
}

std::vector<double> bridge_noise(std::span<const double> x, std::span<const double> q, double step, Mode mode, Rng& rng) {
    if (!(step > 0.0)) throw ConfigError("uniform-noise bridge step must be positive");
    require_same_size(x.size(), q.size(), "bridge_noise");
    if (mode == Mode::eval) return {q.begin(), q.end()};
    std::vector<double> out(x.size());
    for (std::size_t e = 0; e < x.size(); ++e) out[e] = x[e] + rng.uniform(-step / 2.0, step / 2.0);
    return out;
}

double quantization_step(const Constellation& c) {
    const auto nn = nearest_neighbor_spacings(c);
    return std::accumulate(nn.begin(), nn.end(), 0.0) / double(nn.size());
}

ProbabilisticHead ProbabilisticHead::from_constellation(const Constellation& c, double temperature) {
    if (!(temperature > 0.0)) throw ConfigError("head temperature must be positive");
    ProbabilisticHead h;
    h.order = c.order;
    for (const auto& p : c.points) {
        h.weight.push_back(2.0 * p.i / temperature);
        h.weight.push_back(2.0 * p.q / temperature);
        h.bias.push_back(-(p.i * p.i + p.q * p.q) / temperature);
    }
    return h;
}

void ProbabilisticHead::logits(IQ x, std::span<double> out) const {
    for (int j = 0; j < order; ++j) out[j] = weight[2 * j] * x.i + weight[2 * j + 1] * x.q + bias[j];
}

std::vector<double> softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        p[j] = std::exp(logits[j] - mx);
        total += p[j];
    }
    for (auto& v : p) v /= total;
    return p;
}

int sample_categorical(std::span<const double> probabilities, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t j = 0; j < probabilities.size(); ++j) {
        acc += probabilities[j];
        if (u < acc) return int(j);
    }
    // Rounding left the cumulative sum just below u: last non-zero entry.
    for (std::size_t j = probabilities.size(); j-- > 0;)
        if (probabilities[j] > 0.0) return int(j);
    return 0;
}

int argmax(std::span<const double> values) {
    return int(std::max_element(values.begin(), values.end()) - values.begin());
}

GumbelSample gumbel_softmax(std::span<const double> logits, double tau, Rng& rng) {
    if (!(tau > 0.0)) throw ConfigError("Gumbel-softmax temperature must be positive");
    std::vector<double> perturbed(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) perturbed[j] = (logits[j] + rng.gumbel()) / tau;
    GumbelSample s;
    s.hard = argmax(perturbed);
    s.soft = softmax(perturbed);
    return s;
}

std::vector<double> gumbel_softmax_backward(std::span<const double> soft, double tau, std::span<const double> grad_soft) {
    double dot = 0.0;
    for (std::size_t j = 0; j < soft.size(); ++j) dot += soft[j] * grad_soft[j];
    std::vector<double> g(soft.size());
    for (std::size_t j = 0; j < soft.size(); ++j) g[j] = soft[j] * (grad_soft[j] - dot) / tau;
    return g;
}

ProbModulated prob_modulate(std::span<const double> v, const Constellation& c, const ProbabilisticHead& head, Mode mode,
                            double tau, Rng& rng, bool deterministic_eval, bool straight_through) {
    if (head.order != c.order) throw ConfigError("probabilistic head order does not match the constellation");
    const auto pairs = pair_halves(v);
    const std::size_t m = std::size_t(c.order);
    ProbModulated out;
    out.indices.resize(pairs.size());
    out.symbols.resize(pairs.size());
    out.logits.resize(pairs.size() * m);
    if (mode == Mode::train) out.weights.resize(pairs.size() * m);
    for (std::size_t s = 0; s < pairs.size(); ++s) {
        std::span<double> lg(out.logits.data() + s * m, m);
        head.logits(pairs[s], lg);
        if (mode == Mode::eval) {
            const int k = deterministic_eval ? argmax(lg) : sample_categorical(softmax(lg), rng);
            out.indices[s] = k;
            out.symbols[s] = c.points[k];
            continue;
        }
        auto g = gumbel_softmax(lg, tau, rng);
        out.indices[s] = g.hard;
        std::copy(g.soft.begin(), g.soft.end(), out.weights.begin() + std::ptrdiff_t(s * m));
        if (straight_through) {
            out.symbols[s] = c.points[g.hard];
        } else {
            IQ sym{};
            for (std::size_t j = 0; j < m; ++j) {
                sym.i += g.soft[j] * c.points[j].i;
                sym.q += g.soft[j] * c.points[j].q;
            }
            out.symbols[s] = sym;
        }
    }
    return out;
}

BitEncoded bernoulli_bit_encode(std::span<const double> probabilities, Mode mode, double tau, Rng& rng) {
    BitEncoded out;
    if (mode == Mode::eval) {
        out.bits.resize(probabilities.size());
        for (std::size_t e = 0; e < probabilities.size(); ++e) {
            const double p = std::clamp(probabilities[e], kBernoulliEpsilon, 1.0 - kBernoulliEpsilon);
            out.bits[e] = rng.bernoulli(p) ? 1 : 0;
        }
        return out;
    }
    if (!(tau > 0.0)) throw ConfigError("relaxation temperature must be positive");
    out.relaxed.resize(probabilities.size());
    for (std::size_t e = 0; e < probabilities.size(); ++e) {
        const double p = std::clamp(probabilities[e], kBernoulliEpsilon, 1.0 - kBernoulliEpsilon);
        // Two-class Gumbel-softmax, weight of class "1".
        const double z = (std::log(p) + rng.gumbel() - std::log1p(-p) - rng.gumbel()) / tau;
        const double r = 1.0 / (1.0 + std::exp(-z));
        out.relaxed[e] = std::clamp(r, kBernoulliEpsilon, 1.0 - kBernoulliEpsilon);
    }
    return out;
}

NnApproxQuantizer::NnApproxQuantizer(std::size_t dim) : scale(dim, 1.0), shift(dim, 0.0) {}

ScalarQuantized NnApproxQuantizer::forward(std::span<const double> x) const {
    require_same_size(x.size(), scale.size(), "NnApproxQuantizer");
    ScalarQuantized out;
    out.values.resize(x.size());
    out.indices.resize(x.size());
    out.bits.resize(x.size());
    for (std::size_t e = 0; e < x.size(); ++e) {
        const bool on = scale[e] * x[e] + shift[e] > 0.0;
        out.values[e] = on ? amplitude : -amplitude;
        out.indices[e] = on ? 1 : 0;
        out.bits[e] = on ? 1 : 0;
    }
    return out;
}

std::vector<double> NnApproxQuantizer::backward(std::span<const double> x, std::span<const double> grad_q,
                                                std::span<double> grad_scale, std::span<double> grad_shift) const {
    std::vector<double> gx(x.size());
    for (std::size_t e = 0; e < x.size(); ++e) {
        gx[e] = grad_q[e] * scale[e];
        grad_scale[e] += grad_q[e] * x[e];
        grad_shift[e] += grad_q[e];
    }
    return gx;
}

}  // namespace dsc
