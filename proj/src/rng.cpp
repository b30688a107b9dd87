#include "partstore/rng.hpp"

#include "partstore/errors.hpp"

namespace partstore {

uint64_t splitmix64_next(uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

static inline uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

Xoshiro256pp::Xoshiro256pp(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& lane : s_) lane = splitmix64_next(sm);
}

uint64_t Xoshiro256pp::next() {
    uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

uint64_t Xoshiro256pp::next_below(uint64_t bound) {
    if (bound == 0)
        throw Error(ErrorCode::InvalidInput, "next_below(0)");
    // Rejection sampling on the top of the range keeps the draw unbiased.
    uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        uint64_t v = next();
        if (v >= threshold) return v % bound;
    }
}

double Xoshiro256pp::next_unit() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::vector<uint32_t> Xoshiro256pp::sample_without_replacement(uint32_t n, uint32_t k) {
    if (k > n)
        throw Error(ErrorCode::InvalidInput, "sample larger than population");
    std::vector<uint32_t> pool(n);
    for (uint32_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<uint32_t> out;
    out.reserve(k);
    for (uint32_t i = 0; i < k; ++i) {
        uint32_t j = i + static_cast<uint32_t>(next_below(n - i));
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
    return out;
}

uint64_t derive_seed(uint64_t master_seed, uint64_t trial_index, RngStream stream) {
    uint64_t state = master_seed;
    uint64_t a = splitmix64_next(state);
    state = a ^ trial_index;
    uint64_t b = splitmix64_next(state);
    state = b ^ static_cast<uint64_t>(stream);
    return splitmix64_next(state);
}

} // namespace partstore
