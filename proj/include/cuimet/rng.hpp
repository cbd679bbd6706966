#pragma once

#include <cstdint>
#include <random>

namespace cuimet {

// Reproducible random streams.
//
// Every stream is a std::mt19937_64 (its output sequence is fixed by the C++
// standard) seeded with splitmix64(seed, stream). Bootstrap replicate b uses
// stream b, simulated dose arm j uses stream j, so results do not depend on
// thread scheduling and the first B replicates are unchanged when B grows.
// Distributions are implemented here rather than taken from <random>, whose
// distribution algorithms are implementation-defined.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : engine_(derive_seed(seed, stream)) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Unbiased integer in [0, bound) (Lemire's multiply-and-reject).
    std::uint64_t uniform_index(std::uint64_t bound) {
        __extension__ using u128 = unsigned __int128;
        if (bound <= 1) return 0;
        u128 m = static_cast<u128>(next_u64()) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                m = static_cast<u128>(next_u64()) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace cuimet
