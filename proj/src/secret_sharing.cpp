#include "partstore/secret_sharing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>

#include "partstore/errors.hpp"
#include "partstore/gf256.hpp"

namespace partstore {

Bytes Share::serialize() const {
    Bytes out;
    out.reserve(scheme_id.size() + 1 + payload.size());
    append(out, scheme_id);
    out.push_back(x);
    append(out, payload);
    return out;
}

Share Share::deserialize(const Bytes& raw) {
    if (raw.size() < 17)
        throw Error(ErrorCode::InvalidInput, "share blob too short");
    Share s;
    std::copy(raw.begin(), raw.begin() + 16, s.scheme_id.begin());
    s.x = raw[16];
    if (s.x == 0)
        throw Error(ErrorCode::InvalidInput, "share index 0 is reserved");
    s.payload.assign(raw.begin() + 17, raw.end());
    return s;
}

std::vector<Share> split(const Bytes& secret, const ThresholdSpec& spec,
                         Xoshiro256pp& rng,
                         const std::array<uint8_t, 16>& scheme_id) {
    if (secret.empty())
        throw Error(ErrorCode::InvalidInput, "cannot share an empty secret");
    if (spec.n > 255)
        throw Error(ErrorCode::CapacityExceeded, "at most 255 shares per scheme");
    if (spec.t == 0 || spec.t > spec.n)
        throw Error(ErrorCode::InvalidSpec, "threshold must satisfy 1 <= t <= n");

    std::vector<Share> shares(spec.n);
    for (size_t i = 0; i < spec.n; ++i) {
        shares[i].scheme_id = scheme_id;
        shares[i].x = static_cast<uint8_t>(i + 1);
        shares[i].payload.resize(secret.size());
    }

    // Every secret byte gets its own polynomial: c[0] is the byte, degrees
    // 1..t-1 are random. The coefficient block for degree d+1 starts at
    // coeffs[d * len], so Horner can walk whole degree rows at once.
    const size_t len = secret.size();
    std::vector<uint8_t> coeffs((spec.t - 1) * len);
    for (size_t filled = 0; filled < coeffs.size();) {
        uint64_t word = rng.next();
        size_t take = std::min<size_t>(8, coeffs.size() - filled);
        for (size_t k = 0; k < take; ++k)
            coeffs[filled + k] = static_cast<uint8_t>(word >> (8 * k));
        filled += take;
    }

    // Horner per share, vectorized over the secret bytes. The multiplier x
    // is fixed within a share, so one 256-entry product table turns every
    // field multiplication into a single lookup.
    std::array<uint8_t, 256> mul_by_x;
    for (auto& share : shares) {
        uint8_t* out = share.payload.data();
        if (spec.t == 1) {
            std::copy(secret.begin(), secret.end(), out);
            continue;
        }
        for (size_t v = 0; v < 256; ++v)
            mul_by_x[v] = gf256::mul(static_cast<uint8_t>(v), share.x);
        std::copy_n(&coeffs[(spec.t - 2) * len], len, out); // degree t-1
        for (size_t block = spec.t - 2; block-- > 0;) {     // degrees t-2 .. 1
            const uint8_t* c = &coeffs[block * len];
            for (size_t b = 0; b < len; ++b) out[b] = mul_by_x[out[b]] ^ c[b];
        }
        for (size_t b = 0; b < len; ++b) out[b] = mul_by_x[out[b]] ^ secret[b];
    }
    return shares;
}

Bytes reconstruct(const std::vector<Share>& shares, size_t t) {
    if (shares.size() < t || shares.empty())
        throw Error(ErrorCode::InsufficientShares, "need at least t shares");
    const auto& scheme = shares.front().scheme_id;
    const size_t len = shares.front().payload.size();
    for (size_t i = 0; i < shares.size(); ++i) {
        if (shares[i].scheme_id != scheme)
            throw Error(ErrorCode::SchemeMismatch, "shares from different schemes");
        if (shares[i].payload.size() != len)
            throw Error(ErrorCode::InvalidInput, "share payload length mismatch");
        if (shares[i].x == 0)
            throw Error(ErrorCode::InvalidInput, "share index 0 is reserved");
        for (size_t j = i + 1; j < shares.size(); ++j)
            if (shares[i].x == shares[j].x)
                throw Error(ErrorCode::DuplicateShareIndex, "duplicate share index");
    }

    // Lagrange basis at x=0: L_i = prod_{j!=i} x_j / (x_j - x_i). In
    // GF(2^8) subtraction is XOR, so the denominators are x_j ^ x_i.
    const size_t k = shares.size();
    std::vector<uint8_t> basis(k);
    for (size_t i = 0; i < k; ++i) {
        uint8_t num = 1, den = 1;
        for (size_t j = 0; j < k; ++j) {
            if (j == i) continue;
            num = gf256::mul(num, shares[j].x);
            den = gf256::mul(den, gf256::add(shares[j].x, shares[i].x));
        }
        basis[i] = gf256::div(num, den);
    }

    Bytes secret(len, 0);
    for (size_t b = 0; b < len; ++b) {
        uint8_t acc = 0;
        for (size_t i = 0; i < k; ++i)
            acc = gf256::add(acc, gf256::mul(basis[i], shares[i].payload[b]));
        secret[b] = acc;
    }
    return secret;
}

size_t compute_threshold(double rate, size_t n) {
    if (!(rate > 0.0) || rate > 1.0)
        throw Error(ErrorCode::InvalidRate, "threshold rate must be in (0,1]");
    if (n == 0)
        throw Error(ErrorCode::InvalidInput, "no recipients");
    auto rounded = static_cast<size_t>(std::floor(rate * static_cast<double>(n) + 0.5));
    return std::clamp<size_t>(rounded, 1, n);
}

ThresholdRates split_rates(double t_target, size_t p, size_t q) {
    if (!(t_target > 0.0) || t_target > 1.0)
        throw Error(ErrorCode::InvalidRate, "target rate must be in (0,1]");
    if (q < 1 || q > p)
        throw Error(ErrorCode::InvalidInput, "quorum must satisfy 1 <= q <= p");
    ThresholdRates r;
    r.t_target = t_target;
    r.t_storage = static_cast<double>(q) / static_cast<double>(p);
    r.t_storage_part = t_target / r.t_storage;
    if (r.t_storage_part > 1.0) {
        static std::once_flag warned;
        std::call_once(warned, [&] {
            std::fprintf(stderr,
                         "note: per-part threshold rate %.3f capped at 1.0 "
                         "(target %.2f, quorum %zu/%zu)\n",
                         r.t_storage_part, t_target, q, p);
        });
        r.t_storage_part = 1.0;
    }
    return r;
}

} // namespace partstore
