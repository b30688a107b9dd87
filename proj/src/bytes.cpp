#include "partstore/bytes.hpp"

#include <algorithm>
#include <array>
#include <cstring>

#include "partstore/errors.hpp"

namespace partstore {

Bytes bytes_of(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

std::string string_of(const Bytes& b) {
    return std::string(b.begin(), b.end());
}

static constexpr char kHexDigits[] = "0123456789abcdef";

std::string to_hex(const uint8_t* data, size_t len) {
    std::string out;
    out.reserve(len * 2);
    for (size_t i = 0; i < len; ++i) {
        out.push_back(kHexDigits[data[i] >> 4]);
        out.push_back(kHexDigits[data[i] & 0x0F]);
    }
    return out;
}

std::string to_hex(const Bytes& b) {
    return to_hex(b.data(), b.size());
}

static int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0)
        throw Error(ErrorCode::InvalidInput, "odd hex length");
    Bytes out;
    out.reserve(hex.size() / 2);
    for (size_t i = 0; i < hex.size(); i += 2) {
        int hi = hex_nibble(hex[i]);
        int lo = hex_nibble(hex[i + 1]);
        if (hi < 0 || lo < 0)
            throw Error(ErrorCode::InvalidInput, "bad hex digit");
        out.push_back(static_cast<uint8_t>((hi << 4) | lo));
    }
    return out;
}

static constexpr char kB64Digits[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string b64_encode(const uint8_t* data, size_t len) {
    std::string out((len + 2) / 3 * 4, '\0');
    char* o = out.data();
    size_t i = 0;
    for (; i + 3 <= len; i += 3) {
        uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        *o++ = kB64Digits[(v >> 18) & 63];
        *o++ = kB64Digits[(v >> 12) & 63];
        *o++ = kB64Digits[(v >> 6) & 63];
        *o++ = kB64Digits[v & 63];
    }
    size_t rem = len - i;
    if (rem == 1) {
        uint32_t v = data[i] << 16;
        *o++ = kB64Digits[(v >> 18) & 63];
        *o++ = kB64Digits[(v >> 12) & 63];
        *o++ = '=';
        *o++ = '=';
    } else if (rem == 2) {
        uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
        *o++ = kB64Digits[(v >> 18) & 63];
        *o++ = kB64Digits[(v >> 12) & 63];
        *o++ = kB64Digits[(v >> 6) & 63];
        *o++ = '=';
    }
    return out;
}

std::string b64_encode(const Bytes& b) {
    return b64_encode(b.data(), b.size());
}

static constexpr std::array<int8_t, 256> make_b64_values() {
    std::array<int8_t, 256> v{};
    for (auto& e : v) e = -1;
    for (int i = 0; i < 64; ++i) v[static_cast<uint8_t>(kB64Digits[i])] = int8_t(i);
    return v;
}
static constexpr std::array<int8_t, 256> kB64Values = make_b64_values();

static inline int b64_value(char c) {
    return kB64Values[static_cast<uint8_t>(c)];
}

Bytes b64_decode(std::string_view text) {
    if (text.size() % 4 != 0)
        throw Error(ErrorCode::InvalidInput, "base64 length not a multiple of 4");
    Bytes out(text.size() / 4 * 3);
    uint8_t* o = out.data();
    for (size_t i = 0; i < text.size(); i += 4) {
        int pad = 0;
        uint32_t v = 0;
        for (size_t j = 0; j < 4; ++j) {
            char c = text[i + j];
            if (c == '=') {
                // Padding is only legal in the last two positions of the final group.
                if (i + 4 != text.size() || j < 2)
                    throw Error(ErrorCode::InvalidInput, "misplaced base64 padding");
                ++pad;
                v <<= 6;
                continue;
            }
            if (pad > 0)
                throw Error(ErrorCode::InvalidInput, "base64 data after padding");
            int d = b64_value(c);
            if (d < 0)
                throw Error(ErrorCode::InvalidInput, "bad base64 digit");
            v = (v << 6) | static_cast<uint32_t>(d);
        }
        *o++ = static_cast<uint8_t>((v >> 16) & 0xFF);
        if (pad < 2) *o++ = static_cast<uint8_t>((v >> 8) & 0xFF);
        if (pad < 1) *o++ = static_cast<uint8_t>(v & 0xFF);
    }
    out.resize(static_cast<size_t>(o - out.data()));
    return out;
}

void append_u32_be(Bytes& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t read_u32_be(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

bool contains_bytes(const Bytes& haystack, const Bytes& needle) {
    if (needle.empty()) return true;
    if (needle.size() > haystack.size()) return false;
    return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
           haystack.end();
}

} // namespace partstore
