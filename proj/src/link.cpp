#include "dsc/link.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "dsc/errors.hpp"

namespace dsc {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kSqrt2 = 1.41421356237309504880;

int log2_exact(int v) {
    int b = 0;
    while ((1 << b) < v) ++b;
    return b;
}

int hamming(const std::string& a, const std::string& b) {
    int d = 0;
    for (std::size_t k = 0; k < a.size(); ++k) d += a[k] != b[k];
    return d;
}

int nearest_level(std::span<const double> levels, double x) {
    int best = 0;
    double best_d = std::abs(x - levels[0]);
    for (int k = 1; k < int(levels.size()); ++k) {
        const double dk = std::abs(x - levels[k]);
        if (dk < best_d) {
            best_d = dk;
            best = k;
        }
    }
    return best;
}

// Gray labels for scalar level indices, shared by the binary channels.
std::vector<std::string> level_labels(int count) {
    const int bits = log2_exact(count);
    std::vector<std::string> labels(count);
    for (int k = 0; k < count; ++k) labels[k] = binary_label(gray_encode(std::uint32_t(k)), bits);
    return labels;
}

// Sends one label over a binary channel. Returns the received label as
// trits; for bsc no trit is ever erased.
std::vector<Trit> send_label(const std::string& label, const ChannelConfig& ch, Rng& rng) {
    std::vector<std::uint8_t> bits(label.size());
    for (std::size_t b = 0; b < label.size(); ++b) bits[b] = label[b] == '1';
    std::vector<Trit> out(label.size());
    if (ch.kind == ChannelKind::bsc) {
        const auto flipped = bsc(bits, ch.p, rng);
        for (std::size_t b = 0; b < bits.size(); ++b) out[b] = flipped[b] ? Trit::one : Trit::zero;
    } else {
        out = bec(bits, ch.p, rng);
    }
    return out;
}

// Mean of table entries (values of width `dim`) whose labels agree with the
// non-erased trits; also returns the index of an exact match, or -1.
int resolve_label(std::span<const Trit> received, const std::vector<std::string>& labels, std::span<const double> table,
                  int dim, std::span<double> value) {
    std::fill(value.begin(), value.end(), 0.0);
    int count = 0;
    int exact = -1;
    bool erased = false;
    for (auto t : received) erased |= t == Trit::erased;
    for (int k = 0; k < int(labels.size()); ++k) {
        bool match = true;
        for (std::size_t b = 0; b < received.size() && match; ++b) {
            if (received[b] == Trit::erased) continue;
            match = (labels[k][b] == '1') == (received[b] == Trit::one);
        }
        if (!match) continue;
        for (int e = 0; e < dim; ++e) value[e] += table[std::size_t(k) * dim + e];
        ++count;
        if (!erased) exact = k;
    }
    for (auto& v : value) v /= count;
    return exact;
}

}  // namespace

Modulator Modulator::create(const ModulatorConfig& config, const Constellation& constellation, int latent_dim) {
    config.validate();
    Modulator m;
    m.config = config;
    m.constellation = constellation;
    switch (config.family) {
        case ModulatorFamily::scalar:
            m.levels = pam_levels(config.levels);
            if (config.nn_approx) m.nn = NnApproxQuantizer(std::size_t(latent_dim));
            break;
        case ModulatorFamily::symbol: break;
        case ModulatorFamily::vector:
            if (latent_dim % config.block_dim != 0)
                throw ConfigError("latent dimension is not divisible by the VQ block dimension");
            m.codebook.size = config.codebook_size;
            m.codebook.dim = config.block_dim;
            break;
        case ModulatorFamily::probabilistic:
            m.head = ProbabilisticHead::from_constellation(constellation, 0.1);
            break;
    }
    return m;
}

void Modulator::init_codebook(const LatentBatch& latents, std::uint64_t seed) {
    const int b = config.block_dim;
    const std::size_t blocks = latents.values.size() / b;
    if (blocks < std::size_t(config.codebook_size)) throw ConfigError("not enough latent blocks to seed the codebook");
    std::vector<std::size_t> order(blocks);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng.engine());
    codebook.size = config.codebook_size;
    codebook.dim = b;
    codebook.vectors.assign(std::size_t(codebook.size) * b, 0.0);
    for (int k = 0; k < codebook.size; ++k)
        std::copy_n(latents.values.begin() + std::ptrdiff_t(order[k] * b), b,
                    codebook.vectors.begin() + std::ptrdiff_t(std::size_t(k) * b));
}

void Modulator::validate(int latent_dim) const {
    config.validate();
    if (latent_dim % 2 != 0) throw FramingError("latent dimension must be even");
    switch (config.family) {
        case ModulatorFamily::scalar:
            if (int(levels.size()) != config.levels) throw ConfigError("scalar levels do not match configuration");
            if (config.nn_approx && int(nn.scale.size()) != latent_dim)
                throw ConfigError("NN quantizer width does not match the latent");
            break;
        case ModulatorFamily::symbol:
        case ModulatorFamily::probabilistic:
            constellation.validate();
            if (config.family == ModulatorFamily::probabilistic && head.order != constellation.order)
                throw ConfigError("probabilistic head order does not match the constellation");
            break;
        case ModulatorFamily::vector:
            constellation.validate();
            codebook.validate();
            if (latent_dim % codebook.dim != 0) throw ConfigError("latent dimension not divisible by VQ block");
            break;
    }
}

ModulatorGrads ModulatorGrads::zeros(const Modulator& m) {
    ModulatorGrads g;
    g.points.assign(m.constellation.points.size() * 2, 0.0);
    g.codebook.assign(m.codebook.vectors.size(), 0.0);
    g.head_weight.assign(m.head.weight.size(), 0.0);
    g.head_bias.assign(m.head.bias.size(), 0.0);
    g.nn_scale.assign(m.nn.scale.size(), 0.0);
    g.nn_shift.assign(m.nn.shift.size(), 0.0);
    return g;
}

LatentBatch Link::forward(const LatentBatch& latents, const ChannelConfig& ch, Mode mode, double tau, Rng& rng,
                          LinkTape* tape, LinkStats* stats) const {
    ch.validate();
    const int n_batch = latents.count;
    const int d = latents.dim;
    if (d % 2 != 0) throw FramingError("latent dimension must be even");
    const int half = d / 2;
    const bool binary = ch.kind != ChannelKind::awgn;
    LatentBatch out(n_batch, d);
    if (tape) {
        tape->input = latents;
        tape->mode = mode;
        tape->tau = tau;
        tape->symbols.clear();
        tape->elements.clear();
        tape->tx_index.clear();
        tape->rx_index.clear();
        tape->weights.clear();
    }

    if (analog()) {
        if (binary) throw ConfigError("the analog link needs an AWGN channel");
        for (int n = 0; n < n_batch; ++n) {
            auto sym = pair_halves(latents.row(n));
            for (auto& s : sym) s = {s.i * kInvSqrt2, s.q * kInvSqrt2};
            const auto rx = awgn(sym, ch.snr_db, rng, PowerCheck::enforce);
            auto row = out.row(n);
            for (int k = 0; k < half; ++k) {
                row[k] = rx[k].i * kSqrt2;
                row[k + half] = rx[k].q * kSqrt2;
            }
        }
        return out;
    }

    const auto& cfg = mod_->config;
    const bool soft = mode == Mode::train && cfg.bridge == GradientBridge::soft_to_hard && !binary;
    const bool noisy = mode == Mode::train && cfg.bridge == GradientBridge::uniform_noise && !binary;

    if (cfg.family == ModulatorFamily::symbol || cfg.family == ModulatorFamily::probabilistic) {
        const auto& c = mod_->constellation;
        const int m = c.order;
        const auto targets = constellation_targets(c);
        const double step = noisy ? quantization_step(c) : 0.0;
        const bool prob = cfg.family == ModulatorFamily::probabilistic;
        std::vector<double> logits(m);
        for (int n = 0; n < n_batch; ++n) {
            const auto row = latents.row(n);
            std::vector<IQ> tx(half);
            std::vector<int> tx_idx(half);
            for (int k = 0; k < half; ++k) {
                const IQ s{row[k] * kInvSqrt2, row[k + half] * kInvSqrt2};
                if (tape) tape->symbols.push_back(s);
                if (prob) {
                    mod_->head.logits(s, logits);
                    if (mode == Mode::eval) {
                        tx_idx[k] = cfg.deterministic_eval ? argmax(logits) : sample_categorical(softmax(logits), rng);
                    } else {
                        const auto g = gumbel_softmax(logits, tau, rng);
                        tx_idx[k] = g.hard;
                        if (tape) tape->weights.insert(tape->weights.end(), g.soft.begin(), g.soft.end());
                    }
                    tx[k] = c.points[tx_idx[k]];
                } else if (soft) {
                    const double sv[2] = {s.i, s.q};
                    const auto sa = soft_assign(sv, targets, tau);
                    tx[k] = {sa.output[0], sa.output[1]};
                    tx_idx[k] = nearest_point(c, s);
                    if (tape) tape->weights.insert(tape->weights.end(), sa.weights.begin(), sa.weights.end());
                } else if (noisy) {
                    tx[k] = {s.i + rng.uniform(-step / 2, step / 2), s.q + rng.uniform(-step / 2, step / 2)};
                    tx_idx[k] = nearest_point(c, s);
                } else {
                    tx_idx[k] = nearest_point(c, s);
                    tx[k] = c.points[tx_idx[k]];
                }
            }

            std::vector<IQ> rx(half);
            std::vector<int> rx_idx(half);
            if (!binary) {
                const auto y = awgn(tx, ch.snr_db, rng, PowerCheck::skip);
                for (int k = 0; k < half; ++k) {
                    rx_idx[k] = nearest_point(c, y[k]);
                    rx[k] = c.points[rx_idx[k]];
                }
            } else {
                for (int k = 0; k < half; ++k) {
                    const auto trits = send_label(c.labels[tx_idx[k]], ch, rng);
                    double value[2];
                    const int exact = resolve_label(trits, c.labels, targets, 2, value);
                    rx[k] = {value[0], value[1]};
                    rx_idx[k] = exact >= 0 ? exact : nearest_point(c, rx[k]);
                }
            }

            auto orow = out.row(n);
            for (int k = 0; k < half; ++k) {
                orow[k] = rx[k].i * kSqrt2;
                orow[k + half] = rx[k].q * kSqrt2;
            }
            if (stats) {
                stats->symbols += half;
                stats->bits += std::int64_t(half) * c.bits_per_symbol();
                for (int k = 0; k < half; ++k) {
                    stats->symbol_errors += tx_idx[k] != rx_idx[k];
                    stats->bit_errors += hamming(c.labels[tx_idx[k]], c.labels[rx_idx[k]]);
                }
            }
            if (tape) {
                tape->tx_index.insert(tape->tx_index.end(), tx_idx.begin(), tx_idx.end());
                tape->rx_index.insert(tape->rx_index.end(), rx_idx.begin(), rx_idx.end());
            }
        }
        return out;
    }

    if (cfg.family == ModulatorFamily::scalar) {
        const auto& levels = mod_->levels;
        const int l = int(levels.size());
        const auto labels = cfg.nn_approx ? level_labels(2) : level_labels(l);
        const double amp = mod_->nn.amplitude;
        const std::vector<double> nn_table{-amp, amp};
        const std::span<const double> table = cfg.nn_approx ? std::span<const double>(nn_table) : levels;
        const double step = levels.size() > 1 ? levels[1] - levels[0] : 1.0;
        const double sd = std::sqrt(noise_variance(ch.snr_db) / 2.0);
        for (int n = 0; n < n_batch; ++n) {
            const auto row = latents.row(n);
            std::vector<double> x(d), tx(d);
            std::vector<int> tx_idx(d);
            for (int e = 0; e < d; ++e) x[e] = row[e] * kInvSqrt2;
            if (cfg.nn_approx) {
                const auto q = mod_->nn.forward(x);
                tx = q.values;
                tx_idx = q.indices;
            } else {
                for (int e = 0; e < d; ++e) {
                    tx_idx[e] = nearest_level(levels, x[e]);
                    if (soft) {
                        const double xv[1] = {x[e]};
                        const auto sa = soft_assign(xv, levels, tau);
                        tx[e] = sa.output[0];
                        if (tape) tape->weights.insert(tape->weights.end(), sa.weights.begin(), sa.weights.end());
                    } else if (noisy) {
                        tx[e] = x[e] + rng.uniform(-step / 2, step / 2);
                    } else {
                        tx[e] = levels[tx_idx[e]];
                    }
                }
            }
            std::vector<int> rx_idx(d);
            std::vector<double> rx(d);
            for (int e = 0; e < d; ++e) {
                if (!binary) {
                    const double y = sd > 0.0 ? tx[e] + rng.normal(sd) : tx[e];
                    rx_idx[e] = nearest_level(table, y);
                    rx[e] = table[rx_idx[e]];
                } else {
                    const auto trits = send_label(labels[tx_idx[e]], ch, rng);
                    double value[1];
                    const int exact = resolve_label(trits, labels, table, 1, value);
                    rx[e] = value[0];
                    rx_idx[e] = exact >= 0 ? exact : nearest_level(table, rx[e]);
                }
            }
            auto orow = out.row(n);
            for (int e = 0; e < d; ++e) orow[e] = rx[e] * kSqrt2;
            if (stats) {
                stats->symbols += d;
                stats->bits += std::int64_t(d) * int(labels[0].size());
                for (int e = 0; e < d; ++e) {
                    stats->symbol_errors += tx_idx[e] != rx_idx[e];
                    stats->bit_errors += hamming(labels[tx_idx[e]], labels[rx_idx[e]]);
                }
            }
            if (tape) {
                tape->elements.insert(tape->elements.end(), x.begin(), x.end());
                tape->tx_index.insert(tape->tx_index.end(), tx_idx.begin(), tx_idx.end());
                tape->rx_index.insert(tape->rx_index.end(), rx_idx.begin(), rx_idx.end());
            }
        }
        return out;
    }

    // Vector family: codeword indices travel as bits, carried on the
    // constellation over AWGN or directly over a binary channel.
    const auto& cb = mod_->codebook;
    const auto& c = mod_->constellation;
    const int b = cb.dim;
    const int blocks = d / b;
    const int index_bits = log2_exact(cb.size);
    std::vector<std::string> cb_labels(cb.size);
    for (int k = 0; k < cb.size; ++k) cb_labels[k] = binary_label(std::uint32_t(k), index_bits);
    double vq_total = 0.0;
    for (int n = 0; n < n_batch; ++n) {
        const auto row = latents.row(n);
        const auto vq = vector_quantize(row, cb);
        vq_total += vq.codebook_loss + cfg.beta * vq.commitment_loss;
        std::vector<double> tx = vq.values;
        if (soft) {
            for (int blk = 0; blk < blocks; ++blk) {
                const auto sa = soft_assign(row.subspan(std::size_t(blk) * b, b), cb.vectors, tau);
                std::copy(sa.output.begin(), sa.output.end(), tx.begin() + std::ptrdiff_t(blk) * b);
                if (tape) tape->weights.insert(tape->weights.end(), sa.weights.begin(), sa.weights.end());
            }
        }
        std::vector<int> rx_idx(blocks);
        std::vector<double> rx_value(std::size_t(blocks) * b);
        std::int64_t carrier_symbols = 0, carrier_errors = 0;
        if (!binary) {
            std::vector<std::uint8_t> bits;
            for (int idx : vq.indices)
                for (char chb : cb_labels[idx]) bits.push_back(chb == '1');
            const int per = c.bits_per_symbol();
            while (bits.size() % std::size_t(per) != 0) bits.push_back(0);
            const auto sym = bits_to_symbols(c, bits);
            std::vector<IQ> pts(sym.size());
            for (std::size_t k = 0; k < sym.size(); ++k) pts[k] = c.points[sym[k]];
            const auto y = awgn(pts, ch.snr_db, rng, PowerCheck::skip);
            const auto rsym = demodulate(c, y, DemodRule::ml);
            carrier_symbols = std::int64_t(sym.size());
            for (std::size_t k = 0; k < sym.size(); ++k) carrier_errors += sym[k] != rsym[k];
            const auto rbits = symbols_to_bits(c, rsym);
            for (int blk = 0; blk < blocks; ++blk) {
                std::uint32_t v = 0;
                for (int bb = 0; bb < index_bits; ++bb) v = (v << 1) | rbits[std::size_t(blk) * index_bits + bb];
                rx_idx[blk] = int(v);
                const auto w = cb.codeword(rx_idx[blk]);
                std::copy(w.begin(), w.end(), rx_value.begin() + std::ptrdiff_t(blk) * b);
            }
        } else {
            for (int blk = 0; blk < blocks; ++blk) {
                const auto trits = send_label(cb_labels[vq.indices[blk]], ch, rng);
                std::span<double> value(rx_value.data() + std::size_t(blk) * b, std::size_t(b));
                const int exact = resolve_label(trits, cb_labels, cb.vectors, b, value);
                rx_idx[blk] = exact;
                if (exact < 0) {
                    // Erased bits: report the nearest codeword for statistics.
                    double best_d = 1e300;
                    for (int k = 0; k < cb.size; ++k) {
                        double dk = 0.0;
                        const auto w = cb.codeword(k);
                        for (int e = 0; e < b; ++e) dk += (w[e] - value[e]) * (w[e] - value[e]);
                        if (dk < best_d) {
                            best_d = dk;
                            rx_idx[blk] = k;
                        }
                    }
                }
            }
        }
        // Channel errors shift the transmitted value by the codeword difference.
        auto orow = out.row(n);
        for (int blk = 0; blk < blocks; ++blk) {
            const auto sent = cb.codeword(vq.indices[blk]);
            for (int e = 0; e < b; ++e) {
                const std::size_t at = std::size_t(blk) * b + e;
                orow[at] = tx[at] + (rx_value[at] - sent[e]);
            }
        }
        if (stats) {
            stats->symbols += binary ? blocks : carrier_symbols;
            stats->symbol_errors += binary ? 0 : carrier_errors;
            stats->bits += std::int64_t(blocks) * index_bits;
            for (int blk = 0; blk < blocks; ++blk) {
                stats->bit_errors += hamming(cb_labels[vq.indices[blk]], cb_labels[rx_idx[blk]]);
                if (binary) stats->symbol_errors += vq.indices[blk] != rx_idx[blk];
            }
        }
        if (tape) {
            tape->tx_index.insert(tape->tx_index.end(), vq.indices.begin(), vq.indices.end());
            tape->rx_index.insert(tape->rx_index.end(), rx_idx.begin(), rx_idx.end());
        }
    }
    if (stats && n_batch > 0) stats->vq_loss += vq_total / n_batch;
    return out;
}

LatentBatch Link::backward(const LinkTape& tape, const LatentBatch& grad_out, ModulatorGrads* grads) const {
    const int n_batch = grad_out.count;
    const int d = grad_out.dim;
    const int half = d / 2;
    LatentBatch grad_in(n_batch, d);
    if (analog()) {
        grad_in.values = grad_out.values;
        return grad_in;
    }
    const auto& cfg = mod_->config;
    const bool train = tape.mode == Mode::train;
    const bool soft = train && cfg.bridge == GradientBridge::soft_to_hard && !tape.weights.empty();

    if (cfg.family == ModulatorFamily::symbol || cfg.family == ModulatorFamily::probabilistic) {
        const auto& c = mod_->constellation;
        const int m = c.order;
        const auto targets = constellation_targets(c);
        const bool prob = cfg.family == ModulatorFamily::probabilistic;
        for (int n = 0; n < n_batch; ++n) {
            const auto g = grad_out.row(n);
            auto gi = grad_in.row(n);
            for (int k = 0; k < half; ++k) {
                const std::size_t slot = std::size_t(n) * half + k;
                const IQ grad_rx{g[k] * kSqrt2, g[k + half] * kSqrt2};
                if (grads && mod_->learnable_constellation) {
                    grads->points[2 * tape.rx_index[slot]] += grad_rx.i;
                    grads->points[2 * tape.rx_index[slot] + 1] += grad_rx.q;
                }
                // Hard demodulation and the channel pass the gradient through.
                IQ grad_s = grad_rx;
                if (prob && train) {
                    const std::span<const double> w(tape.weights.data() + slot * m, std::size_t(m));
                    std::vector<double> grad_w(m);
                    for (int j = 0; j < m; ++j) grad_w[j] = grad_rx.i * c.points[j].i + grad_rx.q * c.points[j].q;
                    const auto grad_logits = gumbel_softmax_backward(w, tape.tau, grad_w);
                    const IQ s = tape.symbols[slot];
                    grad_s = {0.0, 0.0};
                    for (int j = 0; j < m; ++j) {
                        grad_s.i += grad_logits[j] * mod_->head.weight[2 * j];
                        grad_s.q += grad_logits[j] * mod_->head.weight[2 * j + 1];
                        if (grads) {
                            grads->head_weight[2 * j] += grad_logits[j] * s.i;
                            grads->head_weight[2 * j + 1] += grad_logits[j] * s.q;
                            grads->head_bias[j] += grad_logits[j];
                        }
                    }
                } else if (soft) {
                    SoftAssignment fwd;
                    fwd.weights.assign(tape.weights.begin() + std::ptrdiff_t(slot * m),
                                       tape.weights.begin() + std::ptrdiff_t((slot + 1) * m));
                    fwd.output.assign(2, 0.0);
                    for (int j = 0; j < m; ++j) {
                        fwd.output[0] += fwd.weights[j] * c.points[j].i;
                        fwd.output[1] += fwd.weights[j] * c.points[j].q;
                    }
                    const IQ s = tape.symbols[slot];
                    const double x[2] = {s.i, s.q};
                    const double go[2] = {grad_rx.i, grad_rx.q};
                    double gx[2] = {0.0, 0.0};
                    soft_assign_backward(x, targets, fwd, tape.tau, go, gx, {});
                    grad_s = {gx[0], gx[1]};
                }
                if ((prob && train) || soft) {
                    gi[k] = grad_s.i * kInvSqrt2;
                    gi[k + half] = grad_s.q * kInvSqrt2;
                } else {
                    gi[k] = g[k];
                    gi[k + half] = g[k + half];
                }
            }
        }
        return grad_in;
    }

    if (cfg.family == ModulatorFamily::scalar) {
        const auto& levels = mod_->levels;
        const int l = int(levels.size());
        for (int n = 0; n < n_batch; ++n) {
            const auto g = grad_out.row(n);
            auto gi = grad_in.row(n);
            std::vector<double> grad_tx(d);
            for (int e = 0; e < d; ++e) grad_tx[e] = g[e] * kSqrt2;
            std::vector<double> grad_x(d, 0.0);
            const std::span<const double> x(tape.elements.data() + std::size_t(n) * d, std::size_t(d));
            if (cfg.nn_approx && train) {
                std::vector<double> dummy_scale(d), dummy_shift(d);
                grad_x = mod_->nn.backward(x, grad_tx, grads ? std::span<double>(grads->nn_scale) : dummy_scale,
                                           grads ? std::span<double>(grads->nn_shift) : dummy_shift);
            } else if (soft) {
                for (int e = 0; e < d; ++e) {
                    const std::size_t at = std::size_t(n) * d + e;
                    SoftAssignment fwd;
                    fwd.weights.assign(tape.weights.begin() + std::ptrdiff_t(at * l),
                                       tape.weights.begin() + std::ptrdiff_t((at + 1) * l));
                    fwd.output = {0.0};
                    for (int j = 0; j < l; ++j) fwd.output[0] += fwd.weights[j] * levels[j];
                    const double xv[1] = {x[e]};
                    const double go[1] = {grad_tx[e]};
                    double gx[1] = {0.0};
                    soft_assign_backward(xv, levels, fwd, tape.tau, go, gx, {});
                    grad_x[e] = gx[0];
                }
            } else {
                std::copy(g.begin(), g.end(), gi.begin());
                continue;
            }
            for (int e = 0; e < d; ++e) gi[e] = grad_x[e] * kInvSqrt2;
        }
        return grad_in;
    }

    // Vector family.
    const auto& cb = mod_->codebook;
    const int b = cb.dim;
    const int blocks = d / b;
    for (int n = 0; n < n_batch; ++n) {
        const auto g = grad_out.row(n);
        auto gi = grad_in.row(n);
        const auto v = tape.input.row(n);
        if (soft) {
            for (int blk = 0; blk < blocks; ++blk) {
                const std::size_t at = std::size_t(n) * blocks + blk;
                SoftAssignment fwd;
                fwd.weights.assign(tape.weights.begin() + std::ptrdiff_t(at * cb.size),
                                   tape.weights.begin() + std::ptrdiff_t((at + 1) * cb.size));
                fwd.output.assign(b, 0.0);
                for (int j = 0; j < cb.size; ++j)
                    for (int e = 0; e < b; ++e) fwd.output[e] += fwd.weights[j] * cb.vectors[std::size_t(j) * b + e];
                std::vector<double> empty;
                soft_assign_backward(v.subspan(std::size_t(blk) * b, b), cb.vectors, fwd, tape.tau,
                                     g.subspan(std::size_t(blk) * b, b), gi.subspan(std::size_t(blk) * b, b),
                                     grads ? std::span<double>(grads->codebook) : std::span<double>(empty));
            }
        } else {
            std::copy(g.begin(), g.end(), gi.begin());
        }
        if (train) {
            const std::span<const int> idx(tape.tx_index.data() + std::size_t(n) * blocks, std::size_t(blocks));
            std::vector<double> scratch;
            if (!grads) scratch.assign(cb.vectors.size(), 0.0);
            vector_quantize_loss_backward(v, cb, idx, cfg.beta, 1.0 / n_batch, gi,
                                          grads ? std::span<double>(grads->codebook) : std::span<double>(scratch));
        }
    }
    return grad_in;
}

std::vector<double> spacing_gap_gradients(const Constellation& c, const std::vector<double>& point_grads) {
    const int side = int(c.gaps_i.size()) + 1;
    std::vector<double> grad_level_i(side, 0.0), grad_level_q(side, 0.0);
    for (int a = 0; a < side; ++a) {
        for (int b = 0; b < side; ++b) {
            const int k = a * side + b;
            grad_level_i[a] += point_grads[2 * k];
            grad_level_q[b] += point_grads[2 * k + 1];
        }
    }
    // level_m = -sum(g)/2 + sum_{j<m} g_j
    std::vector<double> out(2 * (side - 1), 0.0);
    for (int j = 0; j < side - 1; ++j) {
        for (int m = 0; m < side; ++m) {
            const double dl = (j < m ? 1.0 : 0.0) - 0.5;
            out[j] += dl * grad_level_i[m];
            out[side - 1 + j] += dl * grad_level_q[m];
        }
    }
    return out;
}

}  // namespace dsc
