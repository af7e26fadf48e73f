#include "dsc/channel.hpp"

#include <cmath>

#include "dsc/errors.hpp"

namespace dsc {

namespace {

void check_probability(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("channel probability must lie in [0, 1]");
}

}  // namespace

std::string to_string(ChannelKind kind) {
    switch (kind) {
        case ChannelKind::awgn: return "awgn";
        case ChannelKind::bsc: return "bsc";
        case ChannelKind::bec: return "bec";
    }
    return "unknown";
}

ChannelKind channel_kind_from_string(const std::string& s) {
    if (s == "awgn") return ChannelKind::awgn;
    if (s == "bsc") return ChannelKind::bsc;
    if (s == "bec") return ChannelKind::bec;
    throw ConfigError("unknown channel kind: " + s);
}

void ChannelConfig::validate() const {
    if (kind == ChannelKind::awgn) {
        if (std::isnan(snr_db)) throw ConfigError("AWGN SNR must be a number");
    } else {
        check_probability(p);
    }
}

double noise_variance(double snr_db) {
    if (std::isinf(snr_db) && snr_db > 0) return 0.0;
    return std::pow(10.0, -snr_db / 10.0);
}

std::vector<IQ> awgn(std::span<const IQ> symbols, double snr_db, Rng& rng, PowerCheck check) {
    if (check == PowerCheck::enforce && !symbols.empty()) {
        double power = 0.0;
        for (const auto& s : symbols) power += s.i * s.i + s.q * s.q;
        power /= double(symbols.size());
        if (std::abs(power - 1.0) > 0.01)
            throw ContractViolation("AWGN input must have unit mean power (got " + std::to_string(power) + ")");
    }
    std::vector<IQ> out(symbols.begin(), symbols.end());
    const double var = noise_variance(snr_db);
    if (var == 0.0) return out;
    const double sd = std::sqrt(var / 2.0);
    for (auto& s : out) {
        s.i += rng.normal(sd);
        s.q += rng.normal(sd);
    }
    return out;
}

std::vector<std::uint8_t> bsc(std::span<const std::uint8_t> bits, double p, Rng& rng) {
    check_probability(p);
    std::vector<std::uint8_t> out(bits.begin(), bits.end());
    for (auto& b : out)
        if (rng.bernoulli(p)) b ^= 1u;
    return out;
}

std::vector<Trit> bec(std::span<const std::uint8_t> bits, double p, Rng& rng) {
    check_probability(p);
    std::vector<Trit> out(bits.size());
    for (std::size_t k = 0; k < bits.size(); ++k)
        out[k] = rng.bernoulli(p) ? Trit::erased : (bits[k] ? Trit::one : Trit::zero);
    return out;
}

}  // namespace dsc
