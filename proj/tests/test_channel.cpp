#include <cmath>

#include "doctest.h"
#include "dsc/channel.hpp"
#include "dsc/errors.hpp"

using namespace dsc;

TEST_SUITE("channel") {

TEST_CASE("noise variance") {
    CHECK(noise_variance(0.0) == 1.0);
    CHECK(noise_variance(10.0) == doctest::Approx(0.1));
    CHECK(noise_variance(-10.0) == doctest::Approx(10.0));
    CHECK(noise_variance(kNoiselessSnrDb) == 0.0);
}

TEST_CASE("AWGN noise statistics") {
    const std::size_t n = 100000;
    std::vector<IQ> x(n, IQ{1.0, 0.0});
    for (double snr : {0.0, 10.0, 20.0}) {
        Rng rng(7);
        const auto y = awgn(x, snr, rng);
        double mi = 0.0, mq = 0.0, si = 0.0, sq = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double di = y[k].i - x[k].i, dq = y[k].q - x[k].q;
            mi += di;
            mq += dq;
            si += di * di;
            sq += dq * dq;
        }
        const double var = std::pow(10.0, -snr / 10.0);
        CHECK(std::abs(mi / n) < 4.0 * std::sqrt(var / 2 / n));
        CHECK(std::abs(mq / n) < 4.0 * std::sqrt(var / 2 / n));
        CHECK(std::abs((si + sq) / n - var) / var < 0.02);
        CHECK(std::abs(si / n - var / 2) / (var / 2) < 0.02);
    }
}

TEST_CASE("noiseless AWGN is the identity") {
    const std::vector<IQ> x{{0.6, 0.8}, {-1.0, 0.0}, {0.0, 1.0}};
    Rng rng(1);
    CHECK(awgn(x, kNoiselessSnrDb, rng) == x);
}

TEST_CASE("AWGN rejects blocks off unit power") {
    const std::vector<IQ> x{{2.0, 0.0}, {0.0, 2.0}};
    Rng rng(1);
    CHECK_THROWS_AS(awgn(x, 10.0, rng), ContractViolation);
    CHECK_NOTHROW(awgn(x, 10.0, rng, PowerCheck::skip));
    const std::vector<IQ> close{{std::sqrt(1.009), 0.0}};
    CHECK_NOTHROW(awgn(close, 10.0, rng));
}

TEST_CASE("AWGN is reproducible per seed") {
    std::vector<IQ> x(64, IQ{0.0, 1.0});
    Rng a(5), b(5), c(6);
    const auto ya = awgn(x, 5.0, a);
    CHECK(ya == awgn(x, 5.0, b));
    CHECK_FALSE(ya == awgn(x, 5.0, c));
}

TEST_CASE("binary symmetric channel") {
    const std::size_t n = 200000;
    std::vector<std::uint8_t> bits(n);
    for (std::size_t k = 0; k < n; ++k) bits[k] = k % 3 == 0;
    Rng rng(11);
    CHECK(bsc(bits, 0.0, rng) == bits);
    std::vector<std::uint8_t> inv(bits);
    for (auto& b : inv) b ^= 1u;
    CHECK(bsc(bits, 1.0, rng) == inv);
    const auto y = bsc(bits, 0.1, rng);
    std::size_t flips = 0;
    for (std::size_t k = 0; k < n; ++k) flips += y[k] != bits[k];
    CHECK(std::abs(double(flips) / n - 0.1) < 4.0 * std::sqrt(0.09 / n));
    CHECK_THROWS_AS(bsc(bits, 1.5, rng), ConfigError);
    CHECK_THROWS_AS(bsc(bits, -0.1, rng), ConfigError);
}

TEST_CASE("binary erasure channel") {
    const std::size_t n = 200000;
    std::vector<std::uint8_t> bits(n);
    for (std::size_t k = 0; k < n; ++k) bits[k] = k % 2;
    Rng rng(12);
    const auto y = bec(bits, 0.25, rng);
    std::size_t erased = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (y[k] == Trit::erased) {
            ++erased;
        } else {
            CHECK(static_cast<std::uint8_t>(y[k]) == bits[k]);
        }
    }
    CHECK(std::abs(double(erased) / n - 0.25) < 4.0 * std::sqrt(0.1875 / n));
    for (auto t : bec(bits, 0.0, rng)) CHECK(t != Trit::erased);
    for (auto t : bec(bits, 1.0, rng)) CHECK(t == Trit::erased);
}

TEST_CASE("channel configuration") {
    ChannelConfig c;
    c.kind = ChannelKind::bsc;
    c.p = 2.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.p = 0.5;
    CHECK_NOTHROW(c.validate());
    CHECK(channel_kind_from_string("bec") == ChannelKind::bec);
    CHECK_THROWS_AS(channel_kind_from_string("rayleigh"), ConfigError);
}

}
