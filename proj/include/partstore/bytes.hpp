#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace partstore {

using Bytes = std::vector<uint8_t>;

Bytes bytes_of(std::string_view s);
std::string string_of(const Bytes& b);

std::string to_hex(const uint8_t* data, size_t len);
std::string to_hex(const Bytes& b);
template <size_t N>
std::string to_hex(const std::array<uint8_t, N>& a) {
    return to_hex(a.data(), N);
}
Bytes from_hex(std::string_view hex);

std::string b64_encode(const uint8_t* data, size_t len);
std::string b64_encode(const Bytes& b);
Bytes b64_decode(std::string_view text);

inline void append(Bytes& out, const Bytes& more) {
    out.insert(out.end(), more.begin(), more.end());
}

inline void append(Bytes& out, std::string_view more) {
    out.insert(out.end(), more.begin(), more.end());
}

template <size_t N>
void append(Bytes& out, const std::array<uint8_t, N>& a) {
    out.insert(out.end(), a.begin(), a.end());
}

void append_u32_be(Bytes& out, uint32_t v);
uint32_t read_u32_be(const uint8_t* p);

// True if `needle` occurs as a contiguous substring of `haystack`.
// Used by the server-blindness trace checks.
bool contains_bytes(const Bytes& haystack, const Bytes& needle);

} // namespace partstore
