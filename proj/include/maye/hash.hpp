// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

namespace maye {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

// Named distinctly: a string literal passed to fnv1a would otherwise bind to
// (const void*, size_t) with the chain value as the length.
inline std::uint64_t fnv1a_str(std::string_view s, std::uint64_t h = kFnvOffset) {
    return fnv1a(s.data(), s.size(), h);
}

// Hashes the exact bit pattern, so equal hashes mean bitwise-equal values.
inline std::uint64_t fnv1a_doubles(const double* data, std::size_t n, std::uint64_t h = kFnvOffset) {
    return fnv1a(data, n * sizeof(double), h);
}

}  // namespace maye
