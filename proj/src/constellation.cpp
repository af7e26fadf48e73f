#include "dsc/constellation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "dsc/errors.hpp"
#include "dsc/rng.hpp"
#include "json.hpp"

namespace dsc {

namespace {

constexpr int kConstellationFormatVersion = 1;

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int log2_exact(int v) {
    int b = 0;
    while ((1 << b) < v) ++b;
    return b;
}

int square_side(int order) {
    if (order != 4 && order != 16 && order != 64 && order != 256)
        throw ConfigError("square QAM order must be one of 4, 16, 64, 256 (got " + std::to_string(order) + ")");
    return int(std::lround(std::sqrt(double(order))));
}

// Grid with per-axis level positions, labeled per axis in Gray code.
Constellation make_grid(int order, std::span<const double> levels_i, std::span<const double> levels_q,
                        ConstellationKind kind) {
    const int side = int(levels_i.size());
    const int axis_bits = log2_exact(side);
    std::vector<IQ> raw;
    std::vector<std::string> labels;
    for (int a = 0; a < side; ++a) {
        for (int b = 0; b < side; ++b) {
            raw.push_back({levels_i[a], levels_q[b]});
            labels.push_back(binary_label(gray_encode(a), axis_bits) + binary_label(gray_encode(b), axis_bits));
        }
    }
    Constellation c;
    c.kind = kind;
    c.order = order;
    c.points = normalize_power(raw);
    c.labels = std::move(labels);
    return c;
}

std::vector<double> levels_from_gaps(std::span<const double> gaps) {
    const double total = std::accumulate(gaps.begin(), gaps.end(), 0.0);
    std::vector<double> levels{-total / 2.0};
    for (double g : gaps) levels.push_back(levels.back() + g);
    return levels;
}

}  // namespace

std::string to_string(ConstellationKind kind) {
    switch (kind) {
        case ConstellationKind::square_qam: return "square-qam";
        case ConstellationKind::learnable_spacing: return "learnable-spacing";
        case ConstellationKind::irregular: return "irregular";
    }
    return "unknown";
}

ConstellationKind constellation_kind_from_string(const std::string& s) {
    if (s == "square-qam") return ConstellationKind::square_qam;
    if (s == "learnable-spacing") return ConstellationKind::learnable_spacing;
    if (s == "irregular") return ConstellationKind::irregular;
    throw ConfigError("unknown constellation kind: " + s);
}

int Constellation::bits_per_symbol() const { return log2_exact(order); }

double Constellation::mean_power() const {
    double s = 0.0;
    for (const auto& p : points) s += p.i * p.i + p.q * p.q;
    return points.empty() ? 0.0 : s / double(points.size());
}

void Constellation::validate() const {
    if (!is_power_of_two(order) || order < 2) throw ConfigError("constellation order must be a power of two");
    if (int(points.size()) != order || int(labels.size()) != order)
        throw ConfigError("constellation point/label count does not match order");
    for (const auto& p : points)
        if (!std::isfinite(p.i) || !std::isfinite(p.q)) throw ConfigError("constellation point is not finite");
    if (std::abs(mean_power() - 1.0) > 1e-6) throw ConfigError("constellation is not unit power");
    const int bits = bits_per_symbol();
    std::vector<std::string> sorted = labels;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw ConfigError("constellation labels are not distinct");
    for (const auto& l : labels)
        if (int(l.size()) != bits || l.find_first_not_of("01") != std::string::npos)
            throw ConfigError("malformed constellation label: " + l);
}

std::vector<IQ> normalize_power(std::span<const IQ> points) {
    double s = 0.0;
    for (const auto& p : points) s += p.i * p.i + p.q * p.q;
    if (!(s > 0.0) || !std::isfinite(s)) throw DegenerateInputError("constellation has zero or non-finite power");
    const double scale = std::sqrt(double(points.size()) / s);
    std::vector<IQ> out(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) out[k] = {points[k].i * scale, points[k].q * scale};
    return out;
}

std::uint32_t gray_encode(std::uint32_t v) { return v ^ (v >> 1); }

std::string binary_label(std::uint32_t value, int bits) {
    std::string s(bits, '0');
    for (int b = 0; b < bits; ++b)
        if (value & (1u << (bits - 1 - b))) s[b] = '1';
    return s;
}

Constellation make_square_qam(int order) {
    const int side = square_side(order);
    std::vector<double> levels(side);
    for (int a = 0; a < side; ++a) levels[a] = double(2 * a - (side - 1));
    return make_grid(order, levels, levels, ConstellationKind::square_qam);
}

Constellation make_learnable_spacing(int order, double spacing) {
    if (!(spacing > 0.0)) throw ConfigError("constellation spacing must be positive");
    const int side = square_side(order);
    std::vector<double> gaps(side - 1, spacing);
    return make_learnable_spacing(order, gaps, gaps);
}

Constellation make_learnable_spacing(int order, std::span<const double> gaps_i, std::span<const double> gaps_q) {
    const int side = square_side(order);
    if (int(gaps_i.size()) != side - 1 || int(gaps_q.size()) != side - 1)
        throw ConfigError("learnable spacing needs sqrt(M)-1 gaps per axis");
    for (double g : gaps_i)
        if (!(g > 0.0)) throw ConfigError("constellation spacing must be positive");
    for (double g : gaps_q)
        if (!(g > 0.0)) throw ConfigError("constellation spacing must be positive");
    const auto li = levels_from_gaps(gaps_i);
    const auto lq = levels_from_gaps(gaps_q);
    auto c = make_grid(order, li, lq, ConstellationKind::learnable_spacing);
    // Keep the gaps in the normalized frame so they describe c.points exactly.
    double raw_power = 0.0;
    for (double a : li)
        for (double b : lq) raw_power += a * a + b * b;
    const double scale = std::sqrt(double(order) / raw_power);
    c.gaps_i.assign(gaps_i.begin(), gaps_i.end());
    c.gaps_q.assign(gaps_q.begin(), gaps_q.end());
    for (auto& g : c.gaps_i) g *= scale;
    for (auto& g : c.gaps_q) g *= scale;
    return c;
}

std::vector<double> pam_levels(int levels) {
    if (levels < 2 || !is_power_of_two(levels)) throw ConfigError("PAM level count must be a power of two >= 2");
    std::vector<double> out(levels);
    double power = 0.0;
    for (int a = 0; a < levels; ++a) {
        out[a] = double(2 * a - (levels - 1));
        power += out[a] * out[a];
    }
    const double scale = std::sqrt(0.5 * levels / power);
    for (auto& v : out) v *= scale;
    return out;
}

KMeansResult kmeans_constellation(std::span<const IQ> bank, int order, const KMeansOptions& options) {
    if (!is_power_of_two(order) || order < 2) throw ConfigError("K-means constellation order must be a power of two");
    if (bank.empty()) throw ConfigError("K-means: empty latent sample bank");
    if (bank.size() < std::size_t(order) * std::size_t(std::max(1, options.min_samples_per_cluster)))
        throw ConfigError("K-means: sample bank too small for order " + std::to_string(order));
    if (options.max_iters < 1) throw ConfigError("K-means: max_iters must be positive");
    for (const auto& p : bank)
        if (!std::isfinite(p.i) || !std::isfinite(p.q)) throw ConfigError("K-means: non-finite sample");

    const std::size_t n = bank.size();
    Rng rng(options.seed);

    // D^2 seeding.
    std::vector<IQ> centroids;
    centroids.reserve(order);
    centroids.push_back(bank[rng.index(n)]);
    std::vector<double> d2(n);
    for (std::size_t s = 0; s < n; ++s) d2[s] = squared_distance(bank[s], centroids[0]);
    while (int(centroids.size()) < order) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t pick = 0;
        if (total > 0.0) {
            const double u = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t s = 0; s < n; ++s) {
                acc += d2[s];
                if (acc > u && d2[s] > 0.0) {
                    pick = s;
                    break;
                }
            }
        } else {
            pick = rng.index(n);
        }
        centroids.push_back(bank[pick]);
        for (std::size_t s = 0; s < n; ++s) d2[s] = std::min(d2[s], squared_distance(bank[s], centroids.back()));
    }

    KMeansResult result;
    std::vector<int> assign(n, -1);
    std::vector<double> dist(n);
    for (int iter = 0; iter < options.max_iters; ++iter) {
        bool changed = false;
        double objective = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            int best = 0;
            double best_d = squared_distance(bank[s], centroids[0]);
            for (int k = 1; k < order; ++k) {
                const double dk = squared_distance(bank[s], centroids[k]);
                if (dk < best_d) {
                    best_d = dk;
                    best = k;
                }
            }
            if (assign[s] != best) changed = true;
            assign[s] = best;
            dist[s] = best_d;
            objective += best_d;
        }
        result.objective.push_back(objective);
        result.iterations = iter + 1;
        if (!changed) {
            result.converged = true;
            break;
        }

        std::vector<double> si(order, 0.0), sq(order, 0.0);
        std::vector<std::size_t> count(order, 0);
        for (std::size_t s = 0; s < n; ++s) {
            si[assign[s]] += bank[s].i;
            sq[assign[s]] += bank[s].q;
            ++count[assign[s]];
        }
        for (int k = 0; k < order; ++k) {
            if (count[k] > 0) {
                centroids[k] = {si[k] / double(count[k]), sq[k] / double(count[k])};
                continue;
            }
            // Empty cluster: move it onto the worst-served sample.
            std::size_t far = 0;
            for (std::size_t s = 1; s < n; ++s)
                if (dist[s] > dist[far]) far = s;
            centroids[k] = bank[far];
            dist[far] = 0.0;
        }
    }

    std::vector<int> perm(order);
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
        const double ta = std::atan2(centroids[a].q, centroids[a].i);
        const double tb = std::atan2(centroids[b].q, centroids[b].i);
        if (ta != tb) return ta < tb;
        return std::hypot(centroids[a].i, centroids[a].q) < std::hypot(centroids[b].i, centroids[b].q);
    });
    for (int k : perm) result.raw_centroids.push_back(centroids[k]);

    auto& c = result.constellation;
    c.kind = ConstellationKind::irregular;
    c.order = order;
    c.points = normalize_power(result.raw_centroids);
    const int bits = c.bits_per_symbol();
    for (int k = 0; k < order; ++k) c.labels.push_back(binary_label(std::uint32_t(k), bits));
    return result;
}

int nearest_point(const Constellation& c, IQ p) {
    int best = 0;
    double best_d = squared_distance(p, c.points[0]);
    for (int k = 1; k < int(c.points.size()); ++k) {
        const double dk = squared_distance(p, c.points[k]);
        if (dk < best_d) {
            best_d = dk;
            best = k;
        }
    }
    return best;
}

std::vector<int> demodulate(const Constellation& c, std::span<const IQ> received, DemodRule rule,
                            const std::optional<MapParams>& map) {
    std::vector<int> out(received.size());
    if (rule == DemodRule::ml) {
        for (std::size_t s = 0; s < received.size(); ++s) out[s] = nearest_point(c, received[s]);
        return out;
    }
    if (!map) throw ConfigError("MAP demodulation needs priors and a noise variance");
    const auto& priors = map->priors;
    if (int(priors.size()) != c.order) throw ConfigError("MAP priors must have one entry per point");
    double total = 0.0;
    for (double p : priors) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("MAP priors must be non-negative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("MAP priors must sum to 1");
    if (!(map->noise_variance > 0.0)) throw ConfigError("MAP noise variance must be positive");

    std::vector<double> log_prior(c.order);
    for (int k = 0; k < c.order; ++k)
        log_prior[k] = priors[k] > 0.0 ? std::log(priors[k]) : -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < received.size(); ++s) {
        int best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < c.order; ++k) {
            const double score = log_prior[k] - squared_distance(received[s], c.points[k]) / map->noise_variance;
            if (score > best_score) {
                best_score = score;
                best = k;
            }
        }
        out[s] = best;
    }
    return out;
}

std::vector<std::uint8_t> symbols_to_bits(const Constellation& c, std::span<const int> indices) {
    const int bits = c.bits_per_symbol();
    std::vector<std::uint8_t> out;
    out.reserve(indices.size() * bits);
    for (int idx : indices) {
        if (idx < 0 || idx >= c.order) throw FramingError("symbol index out of range");
        for (char ch : c.labels[idx]) out.push_back(ch == '1' ? 1 : 0);
    }
    return out;
}

std::vector<int> bits_to_symbols(const Constellation& c, std::span<const std::uint8_t> bits) {
    const int per = c.bits_per_symbol();
    if (bits.size() % std::size_t(per) != 0)
        throw FramingError("bit stream length " + std::to_string(bits.size()) + " is not a multiple of " +
                           std::to_string(per));
    std::map<std::string, int> lookup;
    for (int k = 0; k < c.order; ++k) lookup[c.labels[k]] = k;
    std::vector<int> out;
    out.reserve(bits.size() / per);
    std::string word(per, '0');
    for (std::size_t s = 0; s < bits.size(); s += per) {
        for (int b = 0; b < per; ++b) word[b] = bits[s + b] ? '1' : '0';
        out.push_back(lookup.at(word));
    }
    return out;
}

std::string to_bit_string(std::span<const std::uint8_t> bits) {
    std::string s;
    s.reserve(bits.size());
    for (auto b : bits) s.push_back(b ? '1' : '0');
    return s;
}

IQ expected_point(const Constellation& c, std::span<const Trit> label) {
    const int bits = c.bits_per_symbol();
    if (int(label.size()) != bits) throw FramingError("label length does not match bits per symbol");
    double si = 0.0, sq = 0.0;
    int count = 0;
    for (int k = 0; k < c.order; ++k) {
        bool match = true;
        for (int b = 0; b < bits && match; ++b) {
            if (label[b] == Trit::erased) continue;
            match = (c.labels[k][b] == '1') == (label[b] == Trit::one);
        }
        if (match) {
            si += c.points[k].i;
            sq += c.points[k].q;
            ++count;
        }
    }
    return {si / count, sq / count};
}

std::vector<double> nearest_neighbor_spacings(const Constellation& c) {
    std::vector<double> out(c.points.size(), std::numeric_limits<double>::infinity());
    for (std::size_t a = 0; a < c.points.size(); ++a)
        for (std::size_t b = 0; b < c.points.size(); ++b)
            if (a != b) out[a] = std::min(out[a], std::sqrt(squared_distance(c.points[a], c.points[b])));
    return out;
}

std::string constellation_to_json(const Constellation& c) {
    nlohmann::json j;
    j["format"] = "dsc-constellation";
    j["version"] = kConstellationFormatVersion;
    j["order"] = c.order;
    j["kind"] = to_string(c.kind);
    auto pts = nlohmann::json::array();
    for (const auto& p : c.points) pts.push_back({p.i, p.q});
    j["points"] = pts;
    j["labels"] = c.labels;
    if (c.kind == ConstellationKind::learnable_spacing) {
        j["gaps_i"] = c.gaps_i;
        j["gaps_q"] = c.gaps_q;
    }
    return j.dump(2) + "\n";
}

Constellation constellation_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("constellation file is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "dsc-constellation") throw FormatError("not a constellation file");
        if (j.at("version").get<int>() != kConstellationFormatVersion)
            throw FormatError("unsupported constellation format version");
        Constellation c;
        c.order = j.at("order").get<int>();
        c.kind = constellation_kind_from_string(j.at("kind").get<std::string>());
        for (const auto& p : j.at("points")) c.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        c.labels = j.at("labels").get<std::vector<std::string>>();
        if (j.contains("gaps_i")) c.gaps_i = j.at("gaps_i").get<std::vector<double>>();
        if (j.contains("gaps_q")) c.gaps_q = j.at("gaps_q").get<std::vector<double>>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed constellation file: ") + e.what());
    }
}

void save_constellation(const Constellation& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingFileError("cannot write " + path);
    out << constellation_to_json(c);
}

Constellation load_constellation(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFileError("cannot open constellation file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return constellation_from_json(ss.str());
}

}  // namespace dsc
