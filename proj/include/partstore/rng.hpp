#pragma once

#include <cstdint>
#include <vector>

namespace partstore {

// One step of the splitmix64 generator; also used as the seed expander
// for xoshiro, per the xoshiro authors' recommendation.
uint64_t splitmix64_next(uint64_t& state);

// xoshiro256++ (Blackman & Vigna, public domain). Implemented here rather
// than using <random> engines because the simulator's CSV output must be
// bit-identical across platforms, and the standard distributions are
// implementation-defined.
class Xoshiro256pp {
public:
    explicit Xoshiro256pp(uint64_t seed);

    uint64_t next();

    // Unbiased integer in [0, bound) via rejection sampling; bound ≥ 1.
    uint64_t next_below(uint64_t bound);

    // Uniform double in [0, 1) with 53 bits of precision.
    double next_unit();

    // k distinct values from {0, 1, ..., n-1} via partial Fisher-Yates,
    // returned in selection order.
    std::vector<uint32_t> sample_without_replacement(uint32_t n, uint32_t k);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t s_[4];
};

// Stable derivation of independent per-trial stream seeds from a master
// seed. Different (trial, stream) pairs give decorrelated generators, so
// paired experiment variants can share population and activity draws while
// consuming protocol randomness independently.
enum class RngStream : uint64_t {
    Population = 1,
    Activity = 2,
    Protocol = 3,
};

uint64_t derive_seed(uint64_t master_seed, uint64_t trial_index, RngStream stream);

} // namespace partstore
