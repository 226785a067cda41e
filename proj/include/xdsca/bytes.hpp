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

// Little-endian byte buffers used by every binary format in the library.

#include <xdsca/error.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace xdsca {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
public:
    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }

    void put_bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    void put_string(std::string_view s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        put_bytes(s);
    }

    void put_doubles(const double* data, std::size_t n) {
        put<std::uint64_t>(n);
        const auto* p = reinterpret_cast<const char*>(data);
        buf_.insert(buf_.end(), p, p + n * sizeof(double));
    }

    const std::string& bytes() const noexcept { return buf_; }
    std::string take() { return std::move(buf_); }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string_view get_bytes(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::string get_string() { return std::string(get_bytes(get<std::uint32_t>())); }

    std::vector<double> get_doubles() {
        const auto n = get<std::uint64_t>();
        if (n > (data_.size() - pos_) / sizeof(double))
            throw ValidationError("truncated blob: array of " + std::to_string(n) + " doubles");
        std::vector<double> v(n);
        std::memcpy(v.data(), data_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return v;
    }

    bool done() const noexcept { return pos_ == data_.size(); }
    std::size_t position() const noexcept { return pos_; }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n)
            throw ValidationError("truncated blob at byte " + std::to_string(pos_));
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

// FNV-1a, 64 bit.
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace xdsca
