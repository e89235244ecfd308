#pragma once
// Deterministic random streams. xoshiro256++ core with splitmix64 seeding and
// hand-rolled samplers, so every draw is bit-reproducible across platforms and
// compilers (std:: distributions are implementation-defined and are not used).

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace tlens {

class Rng {
public:
    Rng() : Rng(0) {}
    explicit Rng(std::uint64_t seed);

    // Independent named substream: hash of (seed, tag, idx). Used so e.g. the
    // init draws of layer 3 never shift when layer 2 changes width.
    static Rng stream(std::uint64_t seed, std::string_view tag, std::uint64_t idx = 0);

    std::uint64_t next();

    double uniform();       // [0, 1)
    double uniform_open();  // (0, 1]
    double normal();        // N(0, 1), one-value Box-Muller
    std::uint64_t below(std::uint64_t n);  // [0, n) unbiased

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::array<std::uint64_t, 4> state() const { return s_; }
    void restore(const std::array<std::uint64_t, 4>& s) { s_ = s; }

private:
    std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& x);

}  // namespace tlens
