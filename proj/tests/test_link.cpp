#include <cmath>

#include "doctest.h"
#include "dsc/errors.hpp"
#include "dsc/link.hpp"
#include "support.hpp"

using namespace dsc;

namespace {

LatentBatch normalized_batch(int n, int d, std::uint64_t seed) {
    LatentBatch b(n, d);
    for (int k = 0; k < n; ++k) {
        const auto v = power_normalize(test::random_vector(std::size_t(d), seed + k)).values;
        std::copy(v.begin(), v.end(), b.row(k).begin());
    }
    return b;
}

ChannelConfig awgn_at(double snr) {
    ChannelConfig c;
    c.snr_db = snr;
    return c;
}

}  // namespace

TEST_SUITE("link") {

TEST_CASE("I/Q pairing uses halves") {
    const std::vector<double> v{1, 2, 3, 4, 5, 6};
    const auto s = pair_halves(v);
    REQUIRE(s.size() == 3);
    CHECK(s[0] == IQ{1, 4});
    CHECK(s[2] == IQ{3, 6});
    CHECK(unpair_halves(s) == v);
}

TEST_CASE("noiseless analog link is the identity") {
    const auto z = normalized_batch(4, 16, 1);
    Rng rng(2);
    const Link link(nullptr);
    const auto y = link.forward(z, awgn_at(kNoiselessSnrDb), Mode::eval, 1.0, rng);
    CHECK(test::max_abs_diff(y.values, z.values) < 1e-15);
}

TEST_CASE("analog link noise matches the SNR") {
    const auto z = normalized_batch(400, 64, 3);
    Rng rng(4);
    const Link link(nullptr);
    const auto y = link.forward(z, awgn_at(10.0), Mode::eval, 1.0, rng);
    double err = 0.0;
    for (std::size_t k = 0; k < z.values.size(); ++k) err += (y.values[k] - z.values[k]) * (y.values[k] - z.values[k]);
    // Per latent element: 2 * sigma^2 / 2 after undoing the 1/sqrt(2) scaling.
    CHECK(err / double(z.values.size()) == doctest::Approx(0.1).epsilon(0.03));
}

TEST_CASE("noiseless digital link returns the quantized latent") {
    const auto c = make_square_qam(16);
    ModulatorConfig cfg;
    const auto mod = Modulator::create(cfg, c, 16);
    const auto z = normalized_batch(3, 16, 5);
    Rng rng(6);
    LinkStats stats;
    const auto y = Link(&mod).forward(z, awgn_at(kNoiselessSnrDb), Mode::eval, 1.0, rng, nullptr, &stats);
    for (int n = 0; n < 3; ++n) {
        std::vector<double> scaled(16);
        for (int e = 0; e < 16; ++e) scaled[e] = z.row(n)[e] / std::sqrt(2.0);
        const auto q = symbol_quantize(scaled, c).values;
        for (int e = 0; e < 16; ++e) CHECK(y.row(n)[e] == doctest::Approx(q[e] * std::sqrt(2.0)));
    }
    CHECK(stats.symbols == 24);
    CHECK(stats.symbol_errors == 0);
}

TEST_CASE("bridges agree in evaluation mode") {
    const auto c = make_square_qam(16);
    const auto z = normalized_batch(5, 32, 7);
    std::vector<std::vector<double>> outs;
    for (auto bridge : {GradientBridge::ste, GradientBridge::soft_to_hard, GradientBridge::uniform_noise}) {
        ModulatorConfig cfg;
        cfg.bridge = bridge;
        const auto mod = Modulator::create(cfg, c, 32);
        Rng rng(8);
        outs.push_back(Link(&mod).forward(z, awgn_at(12.0), Mode::eval, 0.5, rng).values);
    }
    CHECK(outs[0] == outs[1]);
    CHECK(outs[0] == outs[2]);
}

TEST_CASE("soft-to-hard backward matches finite differences") {
    const auto c = make_square_qam(16);
    ModulatorConfig cfg;
    cfg.bridge = GradientBridge::soft_to_hard;
    const auto mod = Modulator::create(cfg, c, 8);
    const Link link(&mod);
    auto z = normalized_batch(2, 8, 9);
    LatentBatch go(2, 8);
    go.values = test::random_vector(16, 10);
    const double tau = 0.7;
    // With a noiseless channel the received value is a hard decision, so
    // differentiate the relaxed transmitter directly.
    auto relaxed = [&](const LatentBatch& in) {
        double acc = 0.0;
        for (int n = 0; n < 2; ++n) {
            for (int k = 0; k < 4; ++k) {
                const double x[2] = {in.row(n)[k] / std::sqrt(2.0), in.row(n)[k + 4] / std::sqrt(2.0)};
                const auto sa = soft_assign(x, constellation_targets(c), tau);
                acc += go.row(n)[k] * sa.output[0] * std::sqrt(2.0) + go.row(n)[k + 4] * sa.output[1] * std::sqrt(2.0);
            }
        }
        return acc;
    };
    Rng rng(11);
    LinkTape tape;
    link.forward(z, awgn_at(kNoiselessSnrDb), Mode::train, tau, rng, &tape);
    const auto gi = link.backward(tape, go, nullptr);
    for (std::size_t k = 0; k < z.values.size(); ++k) {
        const double keep = z.values[k];
        z.values[k] = keep + 1e-6;
        const double up = relaxed(z);
        z.values[k] = keep - 1e-6;
        const double down = relaxed(z);
        z.values[k] = keep;
        CHECK(test::rel_err(gi.values[k], (up - down) / 2e-6) < 1e-5);
    }
}

TEST_CASE("straight-through link passes gradients unchanged") {
    const auto c = make_square_qam(64);
    const auto mod = Modulator::create(ModulatorConfig{}, c, 8);
    const auto z = normalized_batch(2, 8, 12);
    LatentBatch go(2, 8);
    go.values = test::random_vector(16, 13);
    Rng rng(14);
    LinkTape tape;
    const Link link(&mod);
    link.forward(z, awgn_at(5.0), Mode::train, 1.0, rng, &tape);
    const auto gi = link.backward(tape, go, nullptr);
    CHECK(gi.values == go.values);
}

TEST_CASE("scalar straight-through link passes gradients unchanged") {
    ModulatorConfig cfg;
    cfg.family = ModulatorFamily::scalar;
    const auto mod = Modulator::create(cfg, make_square_qam(4), 8);
    const auto z = normalized_batch(3, 8, 15);
    LatentBatch go(3, 8);
    go.values = test::random_vector(24, 16);
    Rng rng(17);
    LinkTape tape;
    const Link link(&mod);
    link.forward(z, awgn_at(5.0), Mode::train, 1.0, rng, &tape);
    CHECK(link.backward(tape, go, nullptr).values == go.values);
}

TEST_CASE("spacing gap gradients match finite differences") {
    const std::vector<double> gi{0.8, 1.1, 0.9}, gq{1.0, 1.3, 0.7};
    const auto base = make_learnable_spacing(16, gi, gq);
    const auto w = test::random_vector(32, 15);
    const auto analytic = spacing_gap_gradients(base, w);
    // The gradient ignores the renormalization, so compare against raw levels.
    auto raw_objective = [&](const std::vector<double>& a, const std::vector<double>& b) {
        auto levels = [](const std::vector<double>& g) {
            std::vector<double> l(g.size() + 1, 0.0);
            double total = 0.0;
            for (double x : g) total += x;
            l[0] = -total / 2;
            for (std::size_t j = 0; j < g.size(); ++j) l[j + 1] = l[j] + g[j];
            return l;
        };
        const auto li = levels(a), lq = levels(b);
        double acc = 0.0;
        for (int x = 0; x < 4; ++x)
            for (int y = 0; y < 4; ++y) acc += w[2 * (x * 4 + y)] * li[x] + w[2 * (x * 4 + y) + 1] * lq[y];
        return acc;
    };
    for (int j = 0; j < 3; ++j) {
        auto up = gi, down = gi;
        up[j] += 1e-6;
        down[j] -= 1e-6;
        CHECK(analytic[j] == doctest::Approx((raw_objective(up, gq) - raw_objective(down, gq)) / 2e-6).epsilon(1e-6));
        auto uq = gq, dq = gq;
        uq[j] += 1e-6;
        dq[j] -= 1e-6;
        CHECK(analytic[3 + j] == doctest::Approx((raw_objective(gi, uq) - raw_objective(gi, dq)) / 2e-6).epsilon(1e-6));
    }
}

TEST_CASE("binary channels carry labels") {
    const auto c = make_square_qam(16);
    const auto mod = Modulator::create(ModulatorConfig{}, c, 16);
    const auto z = normalized_batch(4, 16, 16);
    ChannelConfig bsc0;
    bsc0.kind = ChannelKind::bsc;
    Rng rng(17);
    const auto clean = Link(&mod).forward(z, awgn_at(kNoiselessSnrDb), Mode::eval, 1.0, rng);
    CHECK(Link(&mod).forward(z, bsc0, Mode::eval, 1.0, rng).values == clean.values);
    ChannelConfig erase = bsc0;
    erase.kind = ChannelKind::bec;
    erase.p = 1.0;
    const auto y = Link(&mod).forward(z, erase, Mode::eval, 1.0, rng);
    for (double v : y.values) CHECK(std::abs(v) < 1e-12);
    CHECK_THROWS_AS(Link(nullptr).forward(z, bsc0, Mode::eval, 1.0, rng), ConfigError);
}

TEST_CASE("odd latent dimension is a framing error") {
    LatentBatch z(1, 3);
    Rng rng(1);
    CHECK_THROWS_AS(Link(nullptr).forward(z, awgn_at(10.0), Mode::eval, 1.0, rng), FramingError);
}

}
