#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsc/channel.hpp"
#include "dsc/latent_model.hpp"
#include "dsc/modulators.hpp"
#include "json.hpp"

namespace dsc {

inline constexpr int kConfigVersion = 1;

struct TrainSettings {
    int epochs_analog = 20;
    int epochs_finetune = 10;
    int epochs_direct = 10;
    int batch_size = 32;
    double lr_analog = 1e-3;
    double lr_finetune = 1e-4;
    double lr_direct = 1e-3;
    /// Training SNRs, one drawn uniformly per batch. Empty means eval.snr_grid.
    std::vector<double> snr_db;
    double tau_start = 1.0;
    double tau_end = 0.01;
};

struct ConstellationSettings {
    std::string kind = "square-qam";
    int order = 16;
    double spacing = 1.0;
    bool learnable = false;
    int kmeans_max_iters = 100;
    /// Images whose latents feed the K-means bank.
    int design_images = 500;
};

struct EvalSettings {
    std::vector<double> snr_grid{0, 3, 6, 9, 12, 15, 18};
    std::vector<int> orders{4, 16, 64};
    std::vector<std::string> schemes{"analog", "ste-direct", "ste-finetune", "ste-irregular"};
    int n_images = 1000;
    int rounds = 5;
    double multiround_snr_db = 10.0;
    int multiround_images = 500;
};

struct IoSettings {
    std::string dataset = "synthetic";
    std::string data_root;
    int train_size = 4000;
    int test_size = 1000;
};

/// The whole experiment document. Every field maps to exactly one key.
struct ExperimentConfig {
    int version = kConfigVersion;
    std::uint64_t seed = 0;
    Architecture model;
    TrainSettings train;
    ModulatorConfig modulator;
    ConstellationSettings constellation;
    ChannelConfig channel;
    EvalSettings eval;
    IoSettings io;

    std::vector<double> train_snr() const { return train.snr_db.empty() ? eval.snr_grid : train.snr_db; }
};

/// Strict parse: unknown keys, wrong types, out-of-range values and a missing
/// seed or version raise SchemaError. Absent optional keys take defaults.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);
/// Fully resolved document (every key present); canonical when dumped.
nlohmann::json to_json(const ExperimentConfig& cfg);
/// JSON Schema (draft 2020-12) describing the config document.
nlohmann::json config_schema();

nlohmann::json to_json(const Architecture& a);
Architecture architecture_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModulatorConfig& m);
ModulatorConfig modulator_config_from_json(const nlohmann::json& j);

/// Canonical JSON text: sorted keys, two-space indent, trailing newline.
std::string canonical_dump(const nlohmann::json& j);

}  // namespace dsc
