#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsc/checkpoint.hpp"
#include "dsc/constellation.hpp"
#include "dsc/dataset.hpp"
#include "dsc/link.hpp"
#include "json.hpp"

namespace dsc {

struct TrainConfig {
    Stage stage = Stage::analog;
    int epochs = 1;
    int batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    /// One SNR is drawn uniformly from this list for every batch.
    std::vector<double> snr_db{10.0};
    /// Required for the digital stage.
    std::optional<ModulatorConfig> modulator;
    bool learnable_constellation = false;
    double tau_start = 1.0;
    double tau_end = 0.01;
    std::string dataset = "synthetic";
    std::size_t subset_size = 0;
    /// Label stored in the checkpoint.
    std::string scheme = "analog";

    void validate() const;
    /// Temperature used during `epoch` (0-based): exponential decay from
    /// tau_start at the first epoch to tau_end at the last.
    double tau_at(int epoch) const;
};

nlohmann::json to_json(const TrainConfig& cfg);

struct EpochMetrics {
    int epoch = 0;
    double loss = 0.0;
    double tau = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochMetrics> epochs;
    /// Loss of every optimizer step, in order.
    std::vector<double> step_losses;
};

TrainResult pretrain_analog(const TrainConfig& cfg, const Dataset& data, const Architecture& arch);

/// Encodes `sample`, pairs every latent into I/Q and clusters the bank.
Constellation design_constellation(const Checkpoint& ckpt, const Dataset& sample, int order, std::uint64_t seed,
                                   int max_iters = 100, int min_samples_per_cluster = 10);

/// Continues from `source` with the modulator inserted before the channel.
TrainResult finetune_digital(const Checkpoint& source, const TrainConfig& cfg, const Dataset& data,
                             const Constellation& constellation);

/// Same as finetune_digital but from a fresh initialization.
TrainResult train_digital_direct(const TrainConfig& cfg, const Dataset& data, const Architecture& arch,
                                 const Constellation& constellation);

/// Mean pixel MSE (plus the VQ term for the vector family) of the first
/// `batch_size` images, eval mode, noiseless channel. This is the
/// `final_loss` a checkpoint records.
double reference_loss(const Checkpoint& ckpt, const Dataset& data, int batch_size);

void write_metrics_csv(const std::vector<EpochMetrics>& metrics, const std::string& path);

/// The listed images of `data` as one batch.
FeatureMap make_batch(const Dataset& data, std::span<const std::size_t> indices);

}  // namespace dsc
