// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "maye/hash.hpp"
#include "maye/rng.hpp"

using namespace maye;

TEST_CASE("stream draws are reproducible and seed-sensitive") {
    rng::Stream a(42);
    rng::Stream b(42);
    rng::Stream c(43);
    bool any_diff = false;
    for (int i = 0; i < 100; ++i) {
        const std::uint64_t va = a.next_u64();
        CHECK(va == b.next_u64());
        if (va != c.next_u64()) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("next_double stays in [0, 1)") {
    rng::Stream s(7);
    for (int i = 0; i < 10000; ++i) {
        const double v = s.next_double();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("bounded is unbiased enough: chi-square over 10 buckets") {
    rng::Stream s(123);
    constexpr int kBuckets = 10;
    constexpr int kDraws = 100000;
    std::array<int, kBuckets> counts{};
    for (int i = 0; i < kDraws; ++i) ++counts[s.bounded(kBuckets)];

    const double expected = static_cast<double>(kDraws) / kBuckets;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // chi-square 99th percentile, 9 degrees of freedom
    CHECK(chi2 < 21.665994333461924);
}

TEST_CASE("normal moments match the standard normal") {
    rng::Stream s(99);
    constexpr int kDraws = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < kDraws; ++i) {
        const double v = s.normal();
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / kDraws;
    const double var = sum2 / kDraws - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("derive_stream separates keys and is order-sensitive") {
    auto a = rng::derive_stream({1, 2, 3});
    auto a2 = rng::derive_stream({1, 2, 3});
    auto b = rng::derive_stream({1, 3, 2});
    auto c = rng::derive_stream({1, 2});
    CHECK(a.next_u64() == a2.next_u64());

    auto fresh = rng::derive_stream({1, 2, 3});
    CHECK(fresh.next_u64() != b.next_u64());
    auto fresh2 = rng::derive_stream({1, 2, 3});
    CHECK(fresh2.next_u64() != c.next_u64());
}

TEST_CASE("shuffle is a permutation and matches a recorded sequence") {
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
    auto s = rng::derive_stream({11, 22});
    rng::shuffle(v, s);

    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});

    std::vector<int> v2{0, 1, 2, 3, 4, 5, 6, 7};
    auto s2 = rng::derive_stream({11, 22});
    rng::shuffle(v2, s2);
    CHECK(v == v2);
}

TEST_CASE("shuffle visits every permutation of three items") {
    std::map<std::vector<int>, int> seen;
    for (std::uint64_t k = 0; k < 600; ++k) {
        std::vector<int> v{0, 1, 2};
        auto s = rng::derive_stream({5, k});
        rng::shuffle(v, s);
        ++seen[v];
    }
    CHECK(seen.size() == 6);
}

TEST_CASE("fnv1a hashes content, chaining and separators") {
    const std::uint64_t h1 = fnv1a_str("abc");
    const std::uint64_t h2 = fnv1a_str("abc");
    CHECK(h1 == h2);
    CHECK(h1 != fnv1a_str("abd"));

    // chained == one-shot over the concatenation
    const std::uint64_t chained = fnv1a_str("cd", fnv1a_str("ab"));
    CHECK(chained == fnv1a_str("abcd"));

    const double xs[2] = {1.0, 2.0};
    const double ys[2] = {1.0, 2.0000000000000004};
    CHECK(fnv1a_doubles(xs, 2) != fnv1a_doubles(ys, 2));
}
