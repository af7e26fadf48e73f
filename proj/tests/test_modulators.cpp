#include <cmath>
#include <numeric>

#include "doctest.h"
#include "dsc/errors.hpp"
#include "dsc/modulators.hpp"
#include "support.hpp"

using namespace dsc;

TEST_SUITE("modulators") {

TEST_CASE("scalar quantization examples and brute force") {
    const std::vector<double> levels{-1.0, -1.0 / 3, 1.0 / 3, 1.0};
    const double x[] = {0.2, 0.0};
    const auto q = scalar_quantize(x, levels);
    CHECK(q.values[0] == 1.0 / 3);
    CHECK(q.values[1] == -1.0 / 3);
    CHECK(q.bits.size() == 4);

    const auto v = test::random_vector(512, 31, -1.5, 1.5);
    const auto r = scalar_quantize(v, levels);
    for (std::size_t e = 0; e < v.size(); ++e) {
        double best = levels[0];
        for (double l : levels)
            if (std::abs(v[e] - l) < std::abs(v[e] - best)) best = l;
        CHECK(r.values[e] == best);
    }
    CHECK(scalar_quantize(r.values, levels).values == r.values);
    const std::vector<double> unsorted{0.0, -1.0};
    CHECK_THROWS_AS(scalar_quantize(v, unsorted), ConfigError);
    const std::vector<double> three{-1.0, 0.0, 1.0};
    CHECK_THROWS_AS(scalar_quantize(v, three), ConfigError);
}

TEST_CASE("symbol quantization") {
    const auto q4 = make_square_qam(4);
    const double ones[] = {1.0, 1.0, 1.0, 1.0};
    const auto s = symbol_quantize(ones, q4);
    const int k = nearest_point(q4, {1.0, 1.0});
    CHECK(s.symbols == std::vector<int>{k, k});

    const auto c = make_square_qam(16);
    std::vector<double> fix(8);
    for (int p = 0; p < 4; ++p) {
        fix[p] = c.points[3 * p].i;
        fix[p + 4] = c.points[3 * p].q;
    }
    const auto f = symbol_quantize(fix, c);
    CHECK(f.values == fix);
    CHECK(f.symbols == std::vector<int>{0, 3, 6, 9});
    const double odd[] = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(symbol_quantize(odd, c), FramingError);
}

TEST_CASE("vector quantization") {
    VQCodebook cb{2, 2, {0.0, 0.0, 1.0, 1.0}};
    const double x[] = {0.9, 0.8};
    const auto r = vector_quantize(x, cb);
    CHECK(r.indices == std::vector<int>{1});
    CHECK(r.codebook_loss == doctest::Approx(0.05 / 2));
    const double exact[] = {1.0, 1.0, 0.0, 0.0};
    const auto e = vector_quantize(exact, cb);
    CHECK(e.indices == std::vector<int>{1, 0});
    CHECK(e.codebook_loss == 0.0);
    CHECK(e.commitment_loss == 0.0);
    const double three[] = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(vector_quantize(three, cb), ConfigError);
}

TEST_CASE("VQ loss gradient matches finite differences") {
    VQCodebook cb{4, 2, test::random_vector(8, 40)};
    auto v = test::random_vector(6, 41);
    const double beta = 0.25;
    const auto idx = vector_quantize(v, cb).indices;
    // With the assignment frozen, codebook + beta * commitment is
    // (1 + beta) |v - w|^2 / len; the two terms split the gradient.
    std::vector<double> gv(6, 0.0), gc(8, 0.0);
    vector_quantize_loss_backward(v, cb, idx, beta, 1.0, gv, gc);
    for (std::size_t e = 0; e < v.size(); ++e) {
        const auto w = cb.codeword(idx[e / 2]);
        const double diff = v[e] - w[e % 2];
        CHECK(gv[e] == doctest::Approx(beta * 2.0 * diff / 6.0));
    }
    auto objective = [&] {
        double acc = 0.0;
        for (std::size_t e = 0; e < v.size(); ++e) {
            const auto w = cb.codeword(idx[e / 2]);
            acc += (v[e] - w[e % 2]) * (v[e] - w[e % 2]);
        }
        return acc / 6.0;
    };
    for (std::size_t k = 0; k < cb.vectors.size(); ++k) {
        const double keep = cb.vectors[k];
        cb.vectors[k] = keep + 1e-6;
        const double up = objective();
        cb.vectors[k] = keep - 1e-6;
        const double down = objective();
        cb.vectors[k] = keep;
        CHECK(std::abs(gc[k] - (up - down) / 2e-6) < 1e-8);
    }
}

TEST_CASE("deterministic quantizers are idempotent") {
    const auto v = test::random_vector(512, 50, -2.0, 2.0);
    const auto levels = pam_levels(8);
    const auto s1 = scalar_quantize(v, levels).values;
    CHECK(scalar_quantize(s1, levels).values == s1);
    const auto c = make_square_qam(64);
    const auto q1 = symbol_quantize(v, c).values;
    CHECK(symbol_quantize(q1, c).values == q1);
    VQCodebook cb{16, 4, test::random_vector(64, 51)};
    const auto w1 = vector_quantize(v, cb).values;
    CHECK(vector_quantize(w1, cb).values == w1);
}

TEST_CASE("straight-through bridge") {
    const double x[] = {0.2, -0.7};
    const double q[] = {1.0 / 3, -1.0};
    const auto f = bridge_ste(x, q);
    CHECK(f[0] == 1.0 / 3);
    CHECK(f[1] == -1.0);
    const double g[] = {0.5, -2.0};
    CHECK(bridge_ste_backward(g) == std::vector<double>{0.5, -2.0});
}

TEST_CASE("soft assignment properties") {
    const auto c = make_square_qam(16);
    const auto t = constellation_targets(c);
    Rng rng(60);
    for (int n = 0; n < 200; ++n) {
        const double x[] = {rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
        for (double tau : {10.0, 1.0, 0.1, 1e-3}) {
            const auto s = soft_assign(x, t, tau);
            CHECK(std::abs(std::accumulate(s.weights.begin(), s.weights.end(), 0.0) - 1.0) < 1e-9);
            CHECK(argmax(s.weights) == nearest_point(c, {x[0], x[1]}));
        }
    }
    const double x0[] = {0.3, -0.2};
    for (double w : soft_assign(x0, t, 1e12).weights) CHECK(w == doctest::Approx(1.0 / 16).epsilon(1e-9));
    CHECK_THROWS_AS(soft_assign(x0, t, 0.0), ConfigError);
}

TEST_CASE("soft assignment backward matches finite differences") {
    const auto targets = test::random_vector(10, 70);
    auto x = test::random_vector(2, 71);
    auto tg = targets;
    const auto go = test::random_vector(2, 72);
    for (double tau : {10.0, 1.0, 0.3}) {
        auto objective = [&] {
            const auto s = soft_assign(x, tg, tau);
            return s.output[0] * go[0] + s.output[1] * go[1];
        };
        const auto fwd = soft_assign(x, tg, tau);
        std::vector<double> gx(2, 0.0), gt(10, 0.0);
        soft_assign_backward(x, tg, fwd, tau, go, gx, gt);
        for (int k = 0; k < 2; ++k) {
            const double keep = x[k];
            x[k] = keep + 1e-6;
            const double up = objective();
            x[k] = keep - 1e-6;
            const double down = objective();
            x[k] = keep;
            CHECK(test::rel_err(gx[k], (up - down) / 2e-6) < 1e-5);
        }
        for (int k = 0; k < 10; ++k) {
            const double keep = tg[k];
            tg[k] = keep + 1e-6;
            const double up = objective();
            tg[k] = keep - 1e-6;
            const double down = objective();
            tg[k] = keep;
            CHECK(test::rel_err(gt[k], (up - down) / 2e-6) < 1e-5);
        }
    }
}

TEST_CASE("uniform-noise bridge") {
    const std::size_t n = 1000000;
    const double step = 0.4;
    std::vector<double> x(n, 0.25), q(n, 0.0);
    Rng rng(80);
    const auto y = bridge_noise(x, q, step, Mode::train, rng);
    double mean = 0.0, sq = 0.0, worst = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double u = y[k] - x[k];
        mean += u;
        sq += u * u;
        worst = std::max(worst, std::abs(u));
    }
    mean /= double(n);
    const double var = sq / double(n) - mean * mean;
    const double expected = step * step / 12.0;
    CHECK(std::abs(mean) < 3.0 * std::sqrt(expected / double(n)));
    CHECK(std::abs(var - expected) / expected < 0.02);
    CHECK(worst <= step / 2);
    CHECK(bridge_noise(x, q, step, Mode::eval, rng) == q);
    const auto tiny = bridge_noise(std::span<const double>(x).first(10), std::span<const double>(q).first(10), 1e-300,
                                   Mode::train, rng);
    for (double v : tiny) CHECK(v == 0.25);
    CHECK_THROWS_AS(bridge_noise(x, q, 0.0, Mode::train, rng), ConfigError);
}

TEST_CASE("categorical sampling") {
    Rng rng(90);
    std::vector<double> dominant(16, 0.0);
    dominant[7] = 20.0;
    const auto p = softmax(dominant);
    int hits = 0;
    for (int n = 0; n < 10000; ++n) hits += sample_categorical(p, rng) == 7;
    CHECK(double(hits) / 10000 > 0.999);

    const std::vector<double> uniform(8, 0.0);
    const auto pu = softmax(uniform);
    std::vector<int> counts(8, 0);
    for (int n = 0; n < 100000; ++n) ++counts[sample_categorical(pu, rng)];
    double tv = 0.0;
    for (int c : counts) tv += std::abs(double(c) / 100000 - 1.0 / 8);
    CHECK(tv / 2 < 0.02);
}

TEST_CASE("Gumbel-softmax limits and gradient") {
    Rng rng(91);
    const auto logits = test::random_vector(16, 92, -2.0, 2.0);
    for (int n = 0; n < 200; ++n) {
        const auto g = gumbel_softmax(logits, 1e-4, rng);
        CHECK(std::abs(g.soft[g.hard] - 1.0) < 1e-3);
    }
    // Backward is the softmax Jacobian at fixed noise: check via logits shift.
    const auto soft = softmax(logits);
    const auto go = test::random_vector(16, 93);
    const auto gl = gumbel_softmax_backward(soft, 1.0, go);
    auto lg = logits;
    for (int k = 0; k < 16; ++k) {
        const double keep = lg[k];
        lg[k] = keep + 1e-6;
        const auto up = softmax(lg);
        lg[k] = keep - 1e-6;
        const auto down = softmax(lg);
        lg[k] = keep;
        double num = 0.0;
        for (int j = 0; j < 16; ++j) num += go[j] * (up[j] - down[j]) / 2e-6;
        CHECK(test::rel_err(gl[k], num) < 1e-5);
    }
}

TEST_CASE("probabilistic modulation") {
    const auto c = make_square_qam(16);
    const auto head = ProbabilisticHead::from_constellation(c, 0.1);
    // Logits are -|x - c_j|^2 / T up to a shared constant.
    std::vector<double> lg(16);
    head.logits({0.2, -0.4}, lg);
    for (int j = 1; j < 16; ++j) {
        const double expect = -(squared_distance({0.2, -0.4}, c.points[j]) - squared_distance({0.2, -0.4}, c.points[0])) / 0.1;
        CHECK(lg[j] - lg[0] == doctest::Approx(expect).epsilon(1e-10));
    }
    Rng rng(94);
    const auto v = test::random_vector(32, 95);
    const auto ev = prob_modulate(v, c, head, Mode::eval, 1.0, rng, true);
    for (std::size_t s = 0; s < ev.indices.size(); ++s)
        CHECK(ev.indices[s] == argmax(std::span<const double>(ev.logits).subspan(s * 16, 16)));
    const auto tr = prob_modulate(v, c, head, Mode::train, 0.5, rng);
    CHECK(tr.weights.size() == 16 * 16);
    for (std::size_t s = 0; s < tr.indices.size(); ++s) CHECK(tr.symbols[s] == c.points[tr.indices[s]]);
    ProbabilisticHead wrong = ProbabilisticHead::from_constellation(make_square_qam(4), 0.1);
    CHECK_THROWS_AS(prob_modulate(v, c, wrong, Mode::eval, 1.0, rng), ConfigError);
}

TEST_CASE("Bernoulli bit encoding") {
    Rng rng(96);
    const std::vector<double> half(100000, 0.5);
    const auto b = bernoulli_bit_encode(half, Mode::eval, 1.0, rng);
    const double ones = std::accumulate(b.bits.begin(), b.bits.end(), 0.0);
    CHECK(std::abs(ones - 50000.0) < 3.0 * std::sqrt(100000 * 0.25));
    const std::vector<double> sure(1000, 1.0 - kBernoulliEpsilon);
    const auto s = bernoulli_bit_encode(sure, Mode::eval, 1.0, rng);
    CHECK(std::accumulate(s.bits.begin(), s.bits.end(), 0) >= 998);
    const std::vector<double> wild{-3.0, 0.0, 1.0, 2.0, 0.3};
    const auto r = bernoulli_bit_encode(wild, Mode::train, 0.5, rng);
    for (double x : r.relaxed) CHECK((x > 0.0 && x < 1.0));
}

TEST_CASE("NN-approximation quantizer") {
    NnApproxQuantizer nn(4);
    nn.shift = {0.0, 0.5, -0.5, 0.0};
    const double x[] = {0.1, -0.2, 0.3, -0.01};
    const auto q = nn.forward(x);
    CHECK(q.values[0] == nn.amplitude);
    CHECK(q.values[1] == nn.amplitude);
    CHECK(q.values[2] == -nn.amplitude);
    CHECK(q.values[3] == -nn.amplitude);
    const double g[] = {1.0, 2.0, 3.0, 4.0};
    std::vector<double> gs(4, 0.0), gb(4, 0.0);
    const auto gx = nn.backward(x, g, gs, gb);
    CHECK(gx == std::vector<double>{1.0, 2.0, 3.0, 4.0});
    CHECK(gb == std::vector<double>{1.0, 2.0, 3.0, 4.0});
}

TEST_CASE("modulator configuration rules") {
    ModulatorConfig m;
    CHECK_NOTHROW(m.validate());
    m.family = ModulatorFamily::probabilistic;
    m.bridge = GradientBridge::soft_to_hard;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m.family = ModulatorFamily::vector;
    m.bridge = GradientBridge::uniform_noise;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m = ModulatorConfig{};
    m.tau = 0.0;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m = ModulatorConfig{};
    m.family = ModulatorFamily::vector;
    m.codebook_size = 12;
    CHECK_THROWS_AS(m.validate(), ConfigError);
}

}
