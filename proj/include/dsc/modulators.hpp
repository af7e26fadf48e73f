#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsc/constellation.hpp"
#include "dsc/rng.hpp"

namespace dsc {

enum class ModulatorFamily { scalar, symbol, vector, probabilistic };
enum class GradientBridge { ste, soft_to_hard, uniform_noise };
enum class Mode { train, eval };

std::string to_string(ModulatorFamily f);
std::string to_string(GradientBridge b);
ModulatorFamily modulator_family_from_string(const std::string& s);
GradientBridge gradient_bridge_from_string(const std::string& s);

struct ModulatorConfig {
    ModulatorFamily family = ModulatorFamily::symbol;
    GradientBridge bridge = GradientBridge::ste;
    /// Scalar family: quantization levels per real dimension.
    int levels = 4;
    /// Vector family: codebook size K and block dimension b.
    int codebook_size = 16;
    int block_dim = 2;
    double tau = 1.0;
    double beta = 0.25;
    /// Scalar family: learned affine + hard threshold instead of fixed levels.
    bool nn_approx = false;
    /// Probabilistic family: take the argmax instead of sampling in eval mode.
    bool deterministic_eval = false;

    /// Throws ConfigError on an invalid family/bridge combination or parameter.
    void validate() const;
    bool operator==(const ModulatorConfig&) const = default;
};

// ---- I/Q pairing -----------------------------------------------------------

/// Element i of the first half pairs with element i of the second half.
std::vector<IQ> pair_halves(std::span<const double> v);
std::vector<double> unpair_halves(std::span<const IQ> symbols);

// ---- scalar quantization ---------------------------------------------------

struct ScalarQuantized {
    std::vector<double> values;
    std::vector<int> indices;
    /// Gray-coded level index per element, log2(L) bits each.
    std::vector<std::uint8_t> bits;
};

/// Nearest level per element, lower level on ties. Levels strictly increasing,
/// count a power of two.
ScalarQuantized scalar_quantize(std::span<const double> v, std::span<const double> levels);

// ---- symbol quantization ---------------------------------------------------

struct SymbolQuantized {
    std::vector<int> symbols;
    std::vector<double> values;
};

/// Pairs halves into I/Q and snaps each pair to its nearest point.
/// Throws FramingError on odd length.
SymbolQuantized symbol_quantize(std::span<const double> v, const Constellation& c);

// ---- vector quantization ---------------------------------------------------

struct VQCodebook {
    int size = 0;
    int dim = 0;
    /// Row-major size x dim.
    std::vector<double> vectors;

    std::span<const double> codeword(int k) const { return {vectors.data() + std::size_t(k) * dim, std::size_t(dim)}; }
    void validate() const;
};

struct VectorQuantized {
    std::vector<int> indices;
    std::vector<double> values;
    /// |stop(block) - codeword|^2 summed over blocks, divided by vector length.
    double codebook_loss = 0.0;
    /// |block - stop(codeword)|^2 summed over blocks, divided by vector length.
    double commitment_loss = 0.0;
};

VectorQuantized vector_quantize(std::span<const double> v, const VQCodebook& cb);

/// Gradients of codebook_loss + beta * commitment_loss for one vector:
/// the commitment term flows into grad_v, the codebook term into grad_codebook.
void vector_quantize_loss_backward(std::span<const double> v, const VQCodebook& cb, std::span<const int> indices,
                                   double beta, double scale, std::span<double> grad_v,
                                   std::span<double> grad_codebook);

// ---- gradient bridges ------------------------------------------------------

/// Forward value is q; the backward Jacobian is the identity w.r.t. x.
std::vector<double> bridge_ste(std::span<const double> x, std::span<const double> q);
std::vector<double> bridge_ste_backward(std::span<const double> grad_out);

struct SoftAssignment {
    std::vector<double> weights;
    std::vector<double> output;
};

/// weights_j proportional to exp(-|x - t_j|^2 / tau); output = sum_j weights_j t_j.
/// `targets` is row-major count x x.size().
SoftAssignment soft_assign(std::span<const double> x, std::span<const double> targets, double tau);

/// Vector-Jacobian products of soft_assign's output w.r.t. x and the targets.
/// grad_targets may be empty when the targets are frozen.
void soft_assign_backward(std::span<const double> x, std::span<const double> targets, const SoftAssignment& fwd,
                          double tau, std::span<const double> grad_out, std::span<double> grad_x,
                          std::span<double> grad_targets);

/// Flattens constellation points into soft_assign targets.
std::vector<double> constellation_targets(const Constellation& c);

/// x + u with u ~ Uniform(-step/2, step/2) elementwise in train mode; the
/// hard quantization `q` in eval mode. Backward is the identity.
std::vector<double> bridge_noise(std::span<const double> x, std::span<const double> q, double step, Mode mode, Rng& rng);

/// Noise width used by the uniform-noise bridge for a constellation: mean
/// nearest-neighbor distance (the grid step for square QAM).
double quantization_step(const Constellation& c);

// ---- probabilistic modulation ---------------------------------------------

/// Shared linear map from an I/Q pair to M logits, one categorical per slot.
struct ProbabilisticHead {
    int order = 0;
    /// Row-major order x 2.
    std::vector<double> weight;
    std::vector<double> bias;

    /// Initialized so logits equal -|x - c_j|^2 / temperature up to a per-slot constant.
    static ProbabilisticHead from_constellation(const Constellation& c, double temperature);
    void logits(IQ x, std::span<double> out) const;
};

std::vector<double> softmax(std::span<const double> logits);
int sample_categorical(std::span<const double> probabilities, Rng& rng);
int argmax(std::span<const double> values);

struct GumbelSample {
    std::vector<double> soft;
    int hard = 0;
};

GumbelSample gumbel_softmax(std::span<const double> logits, double tau, Rng& rng);
/// d(loss)/d(logits) given d(loss)/d(soft weights).
std::vector<double> gumbel_softmax_backward(std::span<const double> soft, double tau, std::span<const double> grad_soft);

struct ProbModulated {
    std::vector<int> indices;
    /// Transmitted symbols. Train mode: weighted sums of points (hard one-hot
    /// forward when straight_through is set).
    std::vector<IQ> symbols;
    /// Row-major slots x M.
    std::vector<double> logits;
    /// Relaxed weights (train mode only), row-major slots x M.
    std::vector<double> weights;
};

ProbModulated prob_modulate(std::span<const double> v, const Constellation& c, const ProbabilisticHead& head, Mode mode,
                            double tau, Rng& rng, bool deterministic_eval = false, bool straight_through = true);

struct BitEncoded {
    /// Eval mode.
    std::vector<std::uint8_t> bits;
    /// Train mode: relaxed bit values in (0, 1).
    std::vector<double> relaxed;
};

inline constexpr double kBernoulliEpsilon = 1e-6;

/// Probabilities are clamped to [eps, 1 - eps] before use.
BitEncoded bernoulli_bit_encode(std::span<const double> probabilities, Mode mode, double tau, Rng& rng);

// ---- NN-approximation quantizer -------------------------------------------

/// Per-element affine map followed by a sign threshold onto +-amplitude,
/// trained through a straight-through estimator. One bit per element.
struct NnApproxQuantizer {
    std::vector<double> scale;
    std::vector<double> shift;
    double amplitude = 0.7071067811865476;

    explicit NnApproxQuantizer(std::size_t dim = 0);
    ScalarQuantized forward(std::span<const double> x) const;
    /// Returns d(loss)/dx; accumulates parameter gradients.
    std::vector<double> backward(std::span<const double> x, std::span<const double> grad_q, std::span<double> grad_scale,
                                 std::span<double> grad_shift) const;
};

}  // namespace dsc
