#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dsc/channel.hpp"
#include "dsc/constellation.hpp"
#include "dsc/latent_model.hpp"
#include "dsc/modulators.hpp"

namespace dsc {

/// Everything the digital transmitter/receiver pair owns: configuration plus
/// the (possibly trainable) constellation, codebook, head and NN quantizer.
struct Modulator {
    ModulatorConfig config;
    /// Carrier constellation for symbol, probabilistic and vector families.
    Constellation constellation;
    bool learnable_constellation = false;
    /// Scalar family per-dimension levels.
    std::vector<double> levels;
    VQCodebook codebook;
    ProbabilisticHead head;
    NnApproxQuantizer nn;

    /// Builds a modulator for a latent of dimension `latent_dim`; the codebook
    /// is left empty until init_codebook is called.
    static Modulator create(const ModulatorConfig& config, const Constellation& constellation, int latent_dim);
    /// Seeds the codebook with distinct latent blocks drawn from `latents`.
    void init_codebook(const LatentBatch& latents, std::uint64_t seed);
    void validate(int latent_dim) const;
};

struct ModulatorGrads {
    std::vector<double> points;
    std::vector<double> codebook;
    std::vector<double> head_weight;
    std::vector<double> head_bias;
    std::vector<double> nn_scale;
    std::vector<double> nn_shift;

    static ModulatorGrads zeros(const Modulator& m);
};

struct LinkStats {
    std::int64_t symbols = 0;
    std::int64_t symbol_errors = 0;
    std::int64_t bits = 0;
    std::int64_t bit_errors = 0;
    /// Batch-mean VQ codebook + beta * commitment loss (vector family).
    double vq_loss = 0.0;
};

/// Per-sample intermediates for the backward pass.
struct LinkTape {
    LatentBatch input;
    /// Scaled I/Q symbols (symbol / probabilistic) or scaled elements (scalar).
    std::vector<IQ> symbols;
    std::vector<double> elements;
    std::vector<int> tx_index;
    std::vector<int> rx_index;
    /// Relaxed weights from soft-to-hard or Gumbel-softmax, row-major x M.
    std::vector<double> weights;
    double tau = 1.0;
    Mode mode = Mode::eval;
};

/// Latent -> modulator -> channel -> demodulator -> latent. A null modulator
/// gives the analog link, where the latent halves go straight onto I/Q.
/// Channel symbols are the latent pairs scaled by 1/sqrt(2) so a
/// power-normalized latent yields unit-power symbols.
class Link {
public:
    explicit Link(const Modulator* modulator) : mod_(modulator) {}

    bool analog() const { return mod_ == nullptr; }

    LatentBatch forward(const LatentBatch& latents, const ChannelConfig& channel, Mode mode, double tau, Rng& rng,
                        LinkTape* tape = nullptr, LinkStats* stats = nullptr) const;

    /// d(loss)/d(latents). Modulator parameter gradients accumulate into `grads`.
    LatentBatch backward(const LinkTape& tape, const LatentBatch& grad_out, ModulatorGrads* grads) const;

private:
    const Modulator* mod_;
};

/// Converts gradients on learnable-spacing points into gradients on the
/// per-axis gaps (gaps_i followed by gaps_q).
std::vector<double> spacing_gap_gradients(const Constellation& c, const std::vector<double>& point_grads);

}  // namespace dsc
