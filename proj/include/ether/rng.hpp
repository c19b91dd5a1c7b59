// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ether {

// Deterministic, portable random stream.
//
// The generator algorithm is fixed so that alternate implementations can
// reproduce identical streams:
//   * engine: std::mt19937_64 seeded with a single 64-bit value (the seeding
//     procedure for a single result_type is specified by the C++ standard),
//   * uniform double in [0,1): (next_u64() >> 11) * 2^-53,
//   * standard normal: Box-Muller, z0 = sqrt(-2 ln u1) * cos(2*pi*u2) with
//     u1 in (0,1] taken as 1 - uniform(); z1 = sqrt(-2 ln u1) * sin(2*pi*u2)
//     is cached and returned by the following call,
//   * index(n): 128-bit multiply-shift, (next_u64() * n) >> 64,
//   * shuffle: Fisher-Yates from the back using index(i + 1).
//
// Derived streams: stream(master, k) seeds the engine with
// splitmix64(master XOR (k + 1) * 0x9E3779B97F4A7C15), giving independent
// per-run streams from one master seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static std::uint64_t splitmix64(std::uint64_t x);
    static Rng stream(std::uint64_t master_seed, std::uint64_t stream_index);

    std::uint64_t next_u64() { return engine_(); }

    double uniform();
    double uniform(double lo, double hi);
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    std::size_t index(std::size_t n);

    std::vector<double> normal_vector(std::size_t count, double stddev = 1.0);

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

} // namespace ether
