#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsc/latent_model.hpp"
#include "dsc/link.hpp"
#include "json.hpp"

namespace dsc {

inline constexpr int kCheckpointVersion = 1;

enum class Stage { analog, digital };
std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

/// Self-describing training artifact. On disk: 8-byte magic "DSCCKPT\0",
/// u32 format version, u64 header length, canonical JSON header, then every
/// array as little-endian float64 at the offsets the header lists.
struct Checkpoint {
    Architecture architecture;
    ParameterSet params;
    Stage stage = Stage::analog;
    std::uint64_t seed = 0;
    /// Scheme that produced it ("analog", "ste-direct", ...).
    std::string scheme = "analog";
    nlohmann::json train_config = nlohmann::json::object();
    /// Loss of the final parameters on the reference batch.
    double final_loss = 0.0;
    std::optional<Modulator> modulator;

    LatentModel model() const { return LatentModel(architecture, params); }
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dsc
