#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dsc {

/// In-phase / quadrature pair.
struct IQ {
    double i = 0.0;
    double q = 0.0;
    bool operator==(const IQ&) const = default;
};

inline double squared_distance(IQ a, IQ b) {
    const double di = a.i - b.i;
    const double dq = a.q - b.q;
    return di * di + dq * dq;
}

enum class ConstellationKind { square_qam, learnable_spacing, irregular };

std::string to_string(ConstellationKind kind);
ConstellationKind constellation_kind_from_string(const std::string& s);

/// M labeled, unit-power points. Labels are '0'/'1' strings of length log2(M).
struct Constellation {
    ConstellationKind kind = ConstellationKind::square_qam;
    int order = 0;
    std::vector<IQ> points;
    std::vector<std::string> labels;
    /// Free per-axis level gaps, only for learnable_spacing.
    std::vector<double> gaps_i;
    std::vector<double> gaps_q;

    int bits_per_symbol() const;
    double mean_power() const;
    /// Validates order, power, label distinctness. Throws ConfigError.
    void validate() const;
    bool operator==(const Constellation&) const = default;
};

/// Scales points to unit mean power. Throws DegenerateInputError on zero power.
std::vector<IQ> normalize_power(std::span<const IQ> points);

std::uint32_t gray_encode(std::uint32_t v);
std::string binary_label(std::uint32_t value, int bits);

/// Square Gray-labeled QAM, M in {4, 16, 64, 256}. Point k = a * sqrt(M) + b
/// sits at (level[a], level[b]) and carries label gray(a) || gray(b).
Constellation make_square_qam(int order);

/// Square QAM with uniform per-axis spacing; normalization cancels the scale,
/// so this equals make_square_qam(order) for every spacing > 0.
Constellation make_learnable_spacing(int order, double spacing);

/// Square grid with sqrt(M)-1 free gaps per axis, levels centered on zero.
Constellation make_learnable_spacing(int order, std::span<const double> gaps_i, std::span<const double> gaps_q);

/// Unit-power per-dimension PAM levels (mean square 1/2, so an I/Q pair of
/// them has unit power), strictly increasing. L must be a power of two >= 2.
std::vector<double> pam_levels(int levels);

struct KMeansOptions {
    std::uint64_t seed = 0;
    int max_iters = 100;
    /// Bank must hold at least this many samples per cluster.
    int min_samples_per_cluster = 10;
};

struct KMeansResult {
    Constellation constellation;
    /// Centroids before power normalization, in the same (sorted) order.
    std::vector<IQ> raw_centroids;
    /// Sum of squared distances after each assignment step.
    std::vector<double> objective;
    int iterations = 0;
    bool converged = false;
};

/// 2-D Lloyd iteration with D^2 seeding. Empty clusters are re-seeded at the
/// sample farthest from its centroid. Centroids are sorted by (angle, radius)
/// and labeled in binary counting order.
KMeansResult kmeans_constellation(std::span<const IQ> bank, int order, const KMeansOptions& options);

/// argmin squared distance, lowest index on ties.
int nearest_point(const Constellation& c, IQ p);

enum class DemodRule { ml, map };

struct MapParams {
    std::vector<double> priors;
    /// Complex noise variance sigma^2 (sigma^2 / 2 per real dimension).
    double noise_variance = 1.0;
};

std::vector<int> demodulate(const Constellation& c, std::span<const IQ> received, DemodRule rule,
                            const std::optional<MapParams>& map = std::nullopt);

std::vector<std::uint8_t> symbols_to_bits(const Constellation& c, std::span<const int> indices);
/// Throws FramingError if bits.size() is not a multiple of log2(M).
std::vector<int> bits_to_symbols(const Constellation& c, std::span<const std::uint8_t> bits);
std::string to_bit_string(std::span<const std::uint8_t> bits);

/// Bit value or erasure marker, as produced by the erasure channel.
enum class Trit : std::uint8_t { zero = 0, one = 1, erased = 2 };

/// Mean of the points whose labels agree with every non-erased bit; an
/// erased bit contributes its prior mean (both values equally likely).
IQ expected_point(const Constellation& c, std::span<const Trit> label);

/// Smallest distance from each point to any other point.
std::vector<double> nearest_neighbor_spacings(const Constellation& c);

/// Constellation file: versioned JSON with order, kind, points, labels.
std::string constellation_to_json(const Constellation& c);
Constellation constellation_from_json(const std::string& text);
void save_constellation(const Constellation& c, const std::string& path);
Constellation load_constellation(const std::string& path);

}  // namespace dsc
