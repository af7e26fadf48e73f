#include "dsc/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dsc/adam.hpp"
#include "dsc/config.hpp"
#include "dsc/errors.hpp"

namespace dsc {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kChannelStream = 3;
constexpr std::uint64_t kCodebookStream = 4;

struct BatchLoss {
    double loss = 0.0;
    FeatureMap grad;
};

BatchLoss mse_loss(const FeatureMap& out, const FeatureMap& target) {
    BatchLoss r;
    r.grad = FeatureMap(out.channels, out.batch, out.height, out.width);
    const double scale = 1.0 / double(out.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double e = out.data[k] - target.data[k];
        r.loss += e * e;
        r.grad.data[k] = 2.0 * e * scale;
    }
    r.loss *= scale;
    return r;
}

void check_finite(double loss, int epoch, std::size_t step) {
    if (!std::isfinite(loss))
        throw DivergenceError("training diverged: loss is " + std::to_string(loss) + " at epoch " +
                              std::to_string(epoch) + ", step " + std::to_string(step));
}

// Free parameters of a learnable constellation in a flat buffer.
struct ConstellationParams {
    std::vector<double> values;
    std::vector<double> grads;

    void load(const Constellation& c) {
        values.clear();
        if (c.kind == ConstellationKind::learnable_spacing) {
            values = c.gaps_i;
            values.insert(values.end(), c.gaps_q.begin(), c.gaps_q.end());
        } else {
            for (const auto& p : c.points) {
                values.push_back(p.i);
                values.push_back(p.q);
            }
        }
        grads.assign(values.size(), 0.0);
    }

    void gather(const Constellation& c, const std::vector<double>& point_grads) {
        grads = c.kind == ConstellationKind::learnable_spacing ? spacing_gap_gradients(c, point_grads) : point_grads;
    }

    void store(Constellation& c) {
        if (c.kind == ConstellationKind::learnable_spacing) {
            const std::size_t half = values.size() / 2;
            for (auto& g : values) g = std::max(g, 1e-6);
            std::span<const double> all(values);
            c = make_learnable_spacing(c.order, all.first(half), all.subspan(half));
            load(c);
        } else {
            std::vector<IQ> pts(values.size() / 2);
            for (std::size_t k = 0; k < pts.size(); ++k) pts[k] = {values[2 * k], values[2 * k + 1]};
            c.points = normalize_power(pts);
            for (std::size_t k = 0; k < pts.size(); ++k) {
                values[2 * k] = c.points[k].i;
                values[2 * k + 1] = c.points[k].q;
            }
        }
        if (std::abs(c.mean_power() - 1.0) > 1e-9)
            throw ContractViolation("learnable constellation left the unit-power set");
    }
};

// One training run over `data`. A null modulator trains the analog link.
std::vector<double> run_epochs(LatentModel& model, Modulator* mod, const TrainConfig& cfg, const Dataset& data,
                               std::vector<EpochMetrics>& metrics) {
    std::vector<double> step_losses;
    if (cfg.epochs == 0 || data.size() == 0) return step_losses;
    Link link(mod);
    Adam adam(cfg.learning_rate);
    Gradients grads = zero_gradients(model.params());
    ModulatorGrads mgrads;
    ConstellationParams cparams;
    const bool learn_const = mod && mod->learnable_constellation;
    if (mod) mgrads = ModulatorGrads::zeros(*mod);
    if (learn_const) cparams.load(mod->constellation);

    std::vector<std::span<double>> targets;
    std::vector<std::span<const double>> sources;
    for (std::size_t p = 0; p < model.params().params.size(); ++p) {
        targets.emplace_back(model.params().params[p].value);
        sources.emplace_back(grads[p]);
    }
    if (mod) {
        auto add = [&](std::vector<double>& value, const std::vector<double>& grad) {
            if (value.empty()) return;
            targets.emplace_back(value);
            sources.emplace_back(grad);
        };
        add(mod->codebook.vectors, mgrads.codebook);
        add(mod->head.weight, mgrads.head_weight);
        add(mod->head.bias, mgrads.head_bias);
        add(mod->nn.scale, mgrads.nn_scale);
        add(mod->nn.shift, mgrads.nn_shift);
        if (learn_const) add(cparams.values, cparams.grads);
    }

    Rng channel_rng(derive_seed(cfg.seed, {kChannelStream}));
    std::vector<std::size_t> order(data.size());
    const std::size_t bs = std::size_t(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double tau = cfg.tau_at(epoch);
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(cfg.seed, {kShuffleStream, std::uint64_t(epoch)}));
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t first = 0; first < order.size(); first += bs) {
            const std::size_t count = std::min(bs, order.size() - first);
            const auto images = make_batch(data, std::span<const std::size_t>(order).subspan(first, count));
            ChannelConfig ch;
            ch.kind = ChannelKind::awgn;
            ch.snr_db = cfg.snr_db[channel_rng.index(cfg.snr_db.size())];

            EncoderTape etape;
            DecoderTape dtape;
            LinkTape ltape;
            LinkStats stats;
            const auto latents = model.encode_batch(images, &etape);
            const auto received = link.forward(latents, ch, Mode::train, tau, channel_rng, &ltape, &stats);
            const auto out = model.decode_batch(received, &dtape);
            auto loss = mse_loss(out, images);
            const double total = loss.loss + stats.vq_loss;
            check_finite(total, epoch, step_losses.size());

            for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
            if (mod) mgrads = ModulatorGrads::zeros(*mod);
            const auto grad_rx = model.decode_backward(dtape, loss.grad, grads);
            const auto grad_latent = link.backward(ltape, grad_rx, mod ? &mgrads : nullptr);
            model.encode_backward(etape, grad_latent, grads);
            if (learn_const) cparams.gather(mod->constellation, mgrads.points);
            adam.step(targets, sources);
            if (learn_const) cparams.store(mod->constellation);

            step_losses.push_back(total);
            epoch_loss += total;
            ++batches;
        }
        metrics.push_back({epoch + 1, epoch_loss / double(batches), tau, cfg.learning_rate});
    }
    return step_losses;
}

Checkpoint make_checkpoint(const LatentModel& model, const TrainConfig& cfg, std::optional<Modulator> mod) {
    Checkpoint ckpt;
    ckpt.architecture = model.architecture();
    ckpt.params = model.params();
    ckpt.stage = cfg.stage;
    ckpt.seed = cfg.seed;
    ckpt.scheme = cfg.scheme;
    ckpt.train_config = to_json(cfg);
    ckpt.modulator = std::move(mod);
    return ckpt;
}

TrainResult train_digital(LatentModel model, const TrainConfig& cfg, const Dataset& data,
                          const Constellation& constellation) {
    if (cfg.stage != Stage::digital) throw StageMismatchError("digital training needs a digital-stage config");
    cfg.validate();
    const int d = model.architecture().latent_dim();
    auto mod = Modulator::create(*cfg.modulator, constellation, d);
    mod.learnable_constellation = cfg.learnable_constellation;
    if (cfg.learnable_constellation && constellation.kind == ConstellationKind::square_qam)
        throw ConfigError("a square-qam constellation has no free parameters; use learnable-spacing or irregular");
    if (mod.config.family == ModulatorFamily::vector) {
        const auto seed_batch = data.head(std::size_t(cfg.batch_size));
        std::vector<std::size_t> idx(seed_batch.size());
        std::iota(idx.begin(), idx.end(), 0);
        mod.init_codebook(model.encode_batch(make_batch(seed_batch, idx)), derive_seed(cfg.seed, {kCodebookStream}));
    }
    mod.validate(d);
    TrainResult r;
    r.step_losses = run_epochs(model, &mod, cfg, data, r.epochs);
    r.checkpoint = make_checkpoint(model, cfg, std::move(mod));
    r.checkpoint.final_loss = reference_loss(r.checkpoint, data, cfg.batch_size);
    return r;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_size <= 0) throw ConfigError("batch size must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be >= 0");
    if (snr_db.empty()) throw ConfigError("training needs at least one SNR");
    for (double s : snr_db)
        if (std::isnan(s)) throw ConfigError("training SNR is NaN");
    if (!(tau_start > 0.0) || !(tau_end > 0.0)) throw ConfigError("temperatures must be positive");
    if (stage == Stage::digital) {
        if (!modulator) throw ConfigError("digital stage needs a modulator");
        modulator->validate();
    }
}

double TrainConfig::tau_at(int epoch) const {
    if (epochs <= 1) return tau_start;
    if (epoch >= epochs - 1) return tau_end;
    const double t = double(epoch) / double(epochs - 1);
    return tau_start * std::pow(tau_end / tau_start, t);
}

nlohmann::json to_json(const TrainConfig& cfg) {
    nlohmann::json snr = nlohmann::json::array();
    for (double s : cfg.snr_db) {
        if (std::isinf(s))
            snr.push_back("inf");
        else
            snr.push_back(s);
    }
    nlohmann::json j{{"stage", to_string(cfg.stage)},
                     {"epochs", cfg.epochs},
                     {"batch_size", cfg.batch_size},
                     {"learning_rate", cfg.learning_rate},
                     {"seed", cfg.seed},
                     {"snr_db", snr},
                     {"learnable_constellation", cfg.learnable_constellation},
                     {"tau_start", cfg.tau_start},
                     {"tau_end", cfg.tau_end},
                     {"dataset", cfg.dataset},
                     {"subset_size", cfg.subset_size},
                     {"scheme", cfg.scheme}};
    if (cfg.modulator) j["modulator"] = to_json(*cfg.modulator);
    return j;
}

FeatureMap make_batch(const Dataset& data, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ContractViolation("empty batch");
    std::vector<ImageSample> picked;
    picked.reserve(indices.size());
    for (auto i : indices) picked.push_back(data.images.at(i));
    return to_batch(picked);
}

TrainResult pretrain_analog(const TrainConfig& cfg, const Dataset& data, const Architecture& arch) {
    if (cfg.stage != Stage::analog) throw StageMismatchError("pretraining needs an analog-stage config");
    cfg.validate();
    LatentModel model(arch, derive_seed(cfg.seed, {kInitStream}));
    TrainResult r;
    r.step_losses = run_epochs(model, nullptr, cfg, data, r.epochs);
    r.checkpoint = make_checkpoint(model, cfg, std::nullopt);
    r.checkpoint.final_loss = reference_loss(r.checkpoint, data, cfg.batch_size);
    return r;
}

Constellation design_constellation(const Checkpoint& ckpt, const Dataset& sample, int order, std::uint64_t seed,
                                   int max_iters, int min_samples_per_cluster) {
    if (ckpt.stage != Stage::analog) throw StageMismatchError("constellation design needs an analog checkpoint");
    if (sample.size() == 0) throw ConfigError("constellation design needs at least one image");
    const auto model = ckpt.model();
    std::vector<IQ> bank;
    constexpr std::size_t kChunk = 64;
    for (std::size_t first = 0; first < sample.size(); first += kChunk) {
        std::vector<std::size_t> idx(std::min(kChunk, sample.size() - first));
        std::iota(idx.begin(), idx.end(), first);
        const auto latents = model.encode_batch(make_batch(sample, idx));
        for (int n = 0; n < latents.count; ++n) {
            const auto sym = pair_halves(latents.row(n));
            // Same 1/sqrt(2) scaling the link applies before the channel.
            for (const auto& s : sym) bank.push_back({s.i * 0.70710678118654752440, s.q * 0.70710678118654752440});
        }
    }
    KMeansOptions opt;
    opt.seed = seed;
    opt.max_iters = max_iters;
    opt.min_samples_per_cluster = min_samples_per_cluster;
    return kmeans_constellation(bank, order, opt).constellation;
}

TrainResult finetune_digital(const Checkpoint& source, const TrainConfig& cfg, const Dataset& data,
                             const Constellation& constellation) {
    if (source.stage == Stage::digital && source.modulator && cfg.modulator &&
        source.modulator->config.family != cfg.modulator->family)
        throw ConfigError("continued tuning must keep the modulator family");
    return train_digital(source.model(), cfg, data, constellation);
}

TrainResult train_digital_direct(const TrainConfig& cfg, const Dataset& data, const Architecture& arch,
                                 const Constellation& constellation) {
    return train_digital(LatentModel(arch, derive_seed(cfg.seed, {kInitStream})), cfg, data, constellation);
}

double reference_loss(const Checkpoint& ckpt, const Dataset& data, int batch_size) {
    if (data.size() == 0) return 0.0;
    const auto model = ckpt.model();
    std::vector<std::size_t> idx(std::min(std::size_t(batch_size), data.size()));
    std::iota(idx.begin(), idx.end(), 0);
    const auto images = make_batch(data, idx);
    const Modulator* mod = ckpt.modulator ? &*ckpt.modulator : nullptr;
    Link link(mod);
    ChannelConfig ch;
    ch.snr_db = kNoiselessSnrDb;
    Rng rng(derive_seed(ckpt.seed, {kChannelStream}));
    LinkStats stats;
    const auto rx = link.forward(model.encode_batch(images), ch, Mode::eval, 1.0, rng, nullptr, &stats);
    return mse_loss(model.decode_batch(rx), images).loss + stats.vq_loss;
}

void write_metrics_csv(const std::vector<EpochMetrics>& metrics, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MissingFileError("cannot write " + path);
    out.precision(17);
    out << "epoch,loss,tau,lr\n";
    for (const auto& m : metrics) out << m.epoch << ',' << m.loss << ',' << m.tau << ',' << m.lr << '\n';
}

}  // namespace dsc
