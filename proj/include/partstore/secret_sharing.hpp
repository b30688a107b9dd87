#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "partstore/bytes.hpp"
#include "partstore/rng.hpp"

namespace partstore {

// One share of a byte-wise Shamir sharing. The scheme id ties the share to
// a single split instance so shares from unrelated sharings cannot be mixed.
struct Share {
    std::array<uint8_t, 16> scheme_id{};
    uint8_t x = 0; // field point in 1..=255, never 0 (0 is the secret)
    Bytes payload; // one byte per secret byte

    Bytes serialize() const;
    static Share deserialize(const Bytes& raw);

    bool operator==(const Share&) const = default;
};

struct ThresholdSpec {
    size_t t = 0;
    size_t n = 0;
};

// Rate split for the compartmented scheme: the storage-level quorum rate
// (q/p) times the per-part rate gives back the overall target rate.
struct ThresholdRates {
    double t_target = 0.0;
    double t_storage = 0.0;
    double t_storage_part = 0.0;
};

// Splits the secret into spec.n shares, any spec.t of which reconstruct it.
// Byte-wise: every secret byte gets its own random polynomial of degree
// t-1 with the byte as constant term; share i holds the evaluations at
// x=i. Deterministic for a given rng state.
std::vector<Share> split(const Bytes& secret, const ThresholdSpec& spec,
                         Xoshiro256pp& rng,
                         const std::array<uint8_t, 16>& scheme_id);

// Lagrange interpolation at x=0 across all given shares. Callers pass the
// threshold so undershooting is reported as InsufficientShares rather than
// silently producing garbage.
Bytes reconstruct(const std::vector<Share>& shares, size_t t);

// Turns a fractional threshold rate into a concrete share count for n
// recipients: round half up, floored at 1, capped at n.
size_t compute_threshold(double rate, size_t n);

// Derives the two-level rates for p parts with a storage quorum of q.
// The per-part rate is capped at 1.0 when q/p alone already undershoots
// the target.
ThresholdRates split_rates(double t_target, size_t p, size_t q);

} // namespace partstore
