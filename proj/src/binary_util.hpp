#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "verlab/error.hpp"

namespace verlab::detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T byteswap_if_big(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    } else {
        return v;
    }
}

template <typename T>
void append_le(std::string& out, T v) {
    v = byteswap_if_big(v);
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T read_le(std::string_view bytes, std::size_t offset) {
    T v;
    std::memcpy(&v, bytes.data() + offset, sizeof(T));
    return byteswap_if_big(v);
}

inline void append_f32_le(std::string& out, std::span<const double> values) {
    out.reserve(out.size() + values.size() * 4);
    for (double v : values) append_le<float>(out, static_cast<float>(v));
}

/// Decodes exactly `count` float32 values; the payload must be exactly count*4 bytes.
inline std::vector<double> read_f32_le(std::string_view payload, std::size_t count, std::string_view what) {
    if (count > payload.size() / 4 || payload.size() != count * 4) {
        throw TruncationError(std::string(what) + ": expected " + std::to_string(count * 4) + " bytes, got " +
                              std::to_string(payload.size()));
    }
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        const float f = read_le<float>(payload, i * 4);
        if (!std::isfinite(f)) {
            throw NonFiniteError(std::string(what) + ": non-finite value at index " + std::to_string(i));
        }
        out[i] = f;
    }
    return out;
}

}  // namespace verlab::detail
