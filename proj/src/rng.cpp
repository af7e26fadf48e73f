#include "dsc/rng.hpp"

#include <cmath>
#include <limits>

namespace dsc {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> coords) {
    std::uint64_t h = mix64(master);
    for (auto c : coords) h = mix64(h ^ mix64(c + 0x632be59bd9b4e019ULL));
    return h;
}

double Rng::gumbel() {
    double u = uniform();
    constexpr double tiny = std::numeric_limits<double>::min();
    if (u < tiny) u = tiny;
    return -std::log(-std::log(u));
}

}  // namespace dsc
