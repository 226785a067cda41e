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

#pragma once

// Seeding helpers. Every random stream in the library is derived from the run
// seed plus a tuple of stream coordinates, so parallel and serial generation
// produce identical output.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace xdsca {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) noexcept {
    std::uint64_t h = mix64(seed);
    for (auto c : coords)
        h = mix64(h ^ mix64(c + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) {
    return Rng(stream_seed(seed, coords));
}

// Stream tags, kept distinct so that no two purposes share a stream.
namespace stream {
inline constexpr std::uint64_t kDevice = 1;
inline constexpr std::uint64_t kTrace = 2;
inline constexpr std::uint64_t kLabels = 3;
inline constexpr std::uint64_t kDeviceKey = 4;
inline constexpr std::uint64_t kPlaintext = 5;
inline constexpr std::uint64_t kTvla = 6;
inline constexpr std::uint64_t kInit = 7;
inline constexpr std::uint64_t kShuffle = 8;
inline constexpr std::uint64_t kDropout = 9;
inline constexpr std::uint64_t kSelect = 10;
inline constexpr std::uint64_t kSplit = 11;
inline constexpr std::uint64_t kActivity = 12;
} // namespace stream

} // namespace xdsca
