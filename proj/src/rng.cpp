#include "tlens/rng.hpp"

#include <cmath>

namespace tlens {

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}

Rng::Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
}

Rng Rng::stream(std::uint64_t seed, std::string_view tag, std::uint64_t idx) {
    // FNV-1a over the tag, folded with seed and idx through splitmix.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) h = (h ^ c) * 0x100000001b3ULL;
    std::uint64_t x = seed;
    std::uint64_t m = splitmix64(x) ^ h;
    m = m * 0x2545f4914f6cdd1dULL + idx;
    return Rng(m);
}

std::uint64_t Rng::next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform_open() {
    return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
}

double Rng::normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
        v = next();
    } while (v >= limit);
    return v % n;
}

}  // namespace tlens
