/*
 * Copyright 2026 The xdsca Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <xdsca/aes.hpp>
#include <xdsca/random.hpp>

#include <gtest/gtest.h>

#include <set>

using namespace xdsca;

namespace {

std::uint8_t gf_mul(std::uint8_t a, std::uint8_t b) {
    std::uint8_t p = 0;
    while (b) {
        if (b & 1)
            p ^= a;
        a = static_cast<std::uint8_t>((a << 1) ^ ((a & 0x80) ? 0x1b : 0));
        b >>= 1;
    }
    return p;
}

std::uint8_t gf_inv(std::uint8_t a) {
    if (a == 0)
        return 0;
    for (int b = 1; b < 256; ++b)
        if (gf_mul(a, std::uint8_t(b)) == 1)
            return std::uint8_t(b);
    return 0;
}

std::uint8_t rotl8(std::uint8_t x, int s) { return std::uint8_t((x << s) | (x >> (8 - s))); }

} // namespace

TEST(Aes, SboxMatchesFieldInverseAndAffineMap) {
    for (int x = 0; x < 256; ++x) {
        const auto b = gf_inv(std::uint8_t(x));
        const auto expect = std::uint8_t(b ^ rotl8(b, 1) ^ rotl8(b, 2) ^ rotl8(b, 3) ^ rotl8(b, 4) ^ 0x63);
        EXPECT_EQ(sbox(std::uint8_t(x)), expect) << x;
    }
}

TEST(Aes, InverseSbox) {
    for (int x = 0; x < 256; ++x)
        EXPECT_EQ(inv_sbox(sbox(std::uint8_t(x))), x);
}

TEST(Aes, KnownValues) {
    EXPECT_EQ(sbox(0x00), 0x63);
    EXPECT_EQ(sbox(0x53), 0xed);
    EXPECT_EQ(intermediate(0x2b, 0x2b), 0x63);
    EXPECT_EQ(hamming_weight(0xff), 8);
    EXPECT_EQ(hamming_weight(0x63), 4);
}

TEST(Random, StreamsAreDistinctAndReproducible) {
    EXPECT_EQ(stream_seed(1, {2, 3}), stream_seed(1, {2, 3}));
    std::set<std::uint64_t> seen;
    for (std::uint64_t s = 0; s < 4; ++s)
        for (std::uint64_t a = 0; a < 16; ++a)
            for (std::uint64_t b = 0; b < 16; ++b)
                seen.insert(stream_seed(s, {a, b}));
    EXPECT_EQ(seen.size(), 4u * 16 * 16);
    auto r1 = make_rng(7, {1});
    auto r2 = make_rng(7, {1});
    EXPECT_EQ(r1(), r2());
}
