#include <doctest.h>

#include <cstdint>

#include "partstore/gf256.hpp"

using namespace partstore;

TEST_CASE("gf256 multiplication matches known AES-field products") {
    // Classic worked examples for the 0x11B reduction polynomial.
    CHECK(gf256::mul(0x53, 0xCA) == 0x01);
    CHECK(gf256::mul(0x02, 0x80) == 0x1B);
    CHECK(gf256::mul(0x57, 0x13) == 0xFE);
    CHECK(gf256::mul(0x57, 0x83) == 0xC1);
    CHECK(gf256::mul(0x01, 0xAB) == 0xAB);
    CHECK(gf256::mul(0x00, 0xAB) == 0x00);
}

TEST_CASE("gf256 addition is xor and self-inverse") {
    for (unsigned a = 0; a < 256; ++a) {
        CHECK(gf256::add(uint8_t(a), 0) == a);
        CHECK(gf256::add(uint8_t(a), uint8_t(a)) == 0);
    }
    CHECK(gf256::add(0x53, 0xCA) == (0x53 ^ 0xCA));
}

TEST_CASE("gf256 multiplication is commutative and distributes over addition") {
    for (unsigned a = 0; a < 256; ++a) {
        for (unsigned b = 0; b < 256; ++b) {
            uint8_t x = uint8_t(a), y = uint8_t(b);
            CHECK(gf256::mul(x, y) == gf256::mul(y, x));
            // Distributivity against a derived third operand keeps this O(256^2).
            uint8_t z = uint8_t((a * 31 + b * 17 + 5) & 0xFF);
            CHECK(gf256::mul(x, gf256::add(y, z)) ==
                  gf256::add(gf256::mul(x, y), gf256::mul(x, z)));
        }
    }
}

TEST_CASE("gf256 multiplication is associative on a sampled grid") {
    for (unsigned a = 1; a < 256; a += 7) {
        for (unsigned b = 1; b < 256; b += 11) {
            for (unsigned c = 1; c < 256; c += 13) {
                uint8_t x = uint8_t(a), y = uint8_t(b), z = uint8_t(c);
                CHECK(gf256::mul(gf256::mul(x, y), z) ==
                      gf256::mul(x, gf256::mul(y, z)));
            }
        }
    }
}

TEST_CASE("every nonzero element has a multiplicative inverse") {
    for (unsigned a = 1; a < 256; ++a) {
        uint8_t inverse = gf256::inv(uint8_t(a));
        CHECK(gf256::mul(uint8_t(a), inverse) == 0x01);
    }
}

TEST_CASE("gf256 division inverts multiplication") {
    for (unsigned a = 0; a < 256; ++a) {
        for (unsigned b = 1; b < 256; b += 3) {
            uint8_t q = gf256::div(uint8_t(a), uint8_t(b));
            CHECK(gf256::mul(q, uint8_t(b)) == uint8_t(a));
        }
    }
}

TEST_CASE("0x03 generates the full multiplicative group") {
    // 0x03 is primitive mod 0x11B: its powers visit all 255 nonzero values
    // before cycling back to 1, which is what the log/antilog tables rely on.
    uint8_t value = 0x01;
    int period = 0;
    do {
        value = gf256::mul(value, 0x03);
        ++period;
    } while (value != 0x01 && period < 300);
    CHECK(period == 255);
}
