#pragma once

#include <array>
#include <cstdint>

#include "partstore/errors.hpp"

namespace partstore {
namespace gf256 {

// Arithmetic in GF(2^8) with the AES reduction polynomial
// x^8 + x^4 + x^3 + x + 1 (0x11B). Addition is XOR; multiplication and
// inversion go through log/antilog tables built over the generator 0x03.
// Everything lives in the header: the secret-sharing inner loops run these
// per byte per share, so they must inline.

namespace detail {

struct Tables {
    // exp_ is doubled so mul can skip the mod-255 reduction of log sums.
    std::array<uint8_t, 510> exp_;
    std::array<uint8_t, 256> log_;

    constexpr Tables() : exp_{}, log_{} {
        uint16_t x = 1;
        for (int i = 0; i < 255; ++i) {
            exp_[i] = static_cast<uint8_t>(x);
            log_[x] = static_cast<uint8_t>(i);
            // Multiply by the generator 0x03 = x + 1: shift-and-add with
            // reduction by 0x11B.
            uint16_t doubled = x << 1;
            if (doubled & 0x100) doubled ^= 0x11B;
            x = doubled ^ x;
        }
        for (int i = 255; i < 510; ++i) exp_[i] = exp_[i - 255];
        log_[0] = 0; // unused; mul/inv guard the zero cases
    }
};

inline constexpr Tables kTables{};

} // namespace detail

inline uint8_t add(uint8_t a, uint8_t b) { return a ^ b; }

inline uint8_t mul(uint8_t a, uint8_t b) {
    if (a == 0 || b == 0) return 0;
    return detail::kTables.exp_[detail::kTables.log_[a] + detail::kTables.log_[b]];
}

inline uint8_t inv(uint8_t a) {
    if (a == 0)
        throw Error(ErrorCode::InvalidInput, "inverse of zero in GF(256)");
    return detail::kTables.exp_[255 - detail::kTables.log_[a]];
}

inline uint8_t div(uint8_t a, uint8_t b) {
    if (b == 0)
        throw Error(ErrorCode::InvalidInput, "division by zero in GF(256)");
    if (a == 0) return 0;
    return detail::kTables.exp_[detail::kTables.log_[a] + 255 - detail::kTables.log_[b]];
}

} // namespace gf256
} // namespace partstore
