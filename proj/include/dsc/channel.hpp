#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dsc/constellation.hpp"
#include "dsc/rng.hpp"

namespace dsc {

enum class ChannelKind { awgn, bsc, bec };

std::string to_string(ChannelKind kind);
ChannelKind channel_kind_from_string(const std::string& s);

/// SNR sentinel for a noiseless link.
inline constexpr double kNoiselessSnrDb = std::numeric_limits<double>::infinity();

struct ChannelConfig {
    ChannelKind kind = ChannelKind::awgn;
    /// AWGN only. Per-symbol SNR; signal power is 1 by construction.
    double snr_db = 10.0;
    /// BSC flip / BEC erasure probability.
    double p = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Complex noise variance sigma^2 = 10^(-snr_db / 10); zero at the sentinel.
double noise_variance(double snr_db);

enum class PowerCheck { enforce, skip };

/// Adds circular Gaussian noise, sigma^2 / 2 per real dimension. With
/// PowerCheck::enforce the block must have mean power 1 within 1%; symbols
/// drawn from a unit-power constellation only meet that on average, so
/// digital callers pass PowerCheck::skip.
std::vector<IQ> awgn(std::span<const IQ> symbols, double snr_db, Rng& rng, PowerCheck check = PowerCheck::enforce);

/// Flips each bit independently with probability p.
std::vector<std::uint8_t> bsc(std::span<const std::uint8_t> bits, double p, Rng& rng);
/// Erases each bit independently with probability p.
std::vector<Trit> bec(std::span<const std::uint8_t> bits, double p, Rng& rng);

}  // namespace dsc
