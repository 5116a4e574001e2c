#pragma once

#include <cstdint>
#include <limits>

namespace cflsim {

/// Tags that separate the independent random streams of a run.
enum class StreamTag : std::uint64_t {
    Objective = 1,
    ClientDrift = 2,
    TimeDrift = 3,
    SgdNoise = 4,
    ClientSampling = 5,
    Perturbation = 6,
    CoreSet = 7,
    Mcmc = 8,
    Partition = 9,
    Data = 10,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Hashes (master, tag, a, b, c) into a stream seed. The result depends only on
/// the arguments, never on the order in which streams are created.
constexpr std::uint64_t derive_seed(std::uint64_t master, StreamTag tag, std::uint64_t a = 0,
                                    std::uint64_t b = 0, std::uint64_t c = 0) noexcept {
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ static_cast<std::uint64_t>(tag));
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    return h;
}

/// SplitMix64 engine. Satisfies UniformRandomBitGenerator, so it plugs into the
/// <random> distributions. Seeding is free, which matters because a stream is
/// created per (client, round, step).
class DerivedStream {
public:
    using result_type = std::uint64_t;

    explicit DerivedStream(std::uint64_t seed) noexcept : state_(seed) {}
    DerivedStream(std::uint64_t master, StreamTag tag, std::uint64_t a = 0, std::uint64_t b = 0,
                  std::uint64_t c = 0) noexcept
        : state_(derive_seed(master, tag, a, b, c)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

}  // namespace cflsim
