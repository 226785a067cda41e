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

#include <xdsca/aes.hpp>
#include <xdsca/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace xdsca {

enum class LabelKind : std::uint8_t { KeyByte = 0, SboxOutput = 1 };

inline std::string_view to_string(LabelKind k) {
    return k == LabelKind::KeyByte ? "key_byte" : "sbox_output";
}

inline LabelKind label_kind_from_string(std::string_view s) {
    if (s == "key_byte")
        return LabelKind::KeyByte;
    if (s == "sbox_output")
        return LabelKind::SboxOutput;
    throw ValidationError("unknown label kind '" + std::string(s) + "'");
}

// One of the 256 output classes.
struct ClassLabel {
    std::uint8_t value = 0;
    friend constexpr bool operator==(ClassLabel, ClassLabel) = default;
};

struct GridLocation {
    std::uint8_t row = 0;
    std::uint8_t col = 0;
    friend constexpr bool operator==(GridLocation, GridLocation) = default;
};

// One acquisition. Samples are dimensionless amplitudes.
struct Trace {
    std::vector<float> samples;
    std::uint8_t plaintext = 0;
    std::uint8_t key = 0;
    std::uint32_t device_id = 0;
    GridLocation location;
    std::uint32_t n_averaged = 1;

    std::uint8_t intermediate_value() const noexcept { return intermediate(plaintext, key); }

    ClassLabel label(LabelKind kind) const noexcept {
        return {kind == LabelKind::KeyByte ? key : intermediate_value()};
    }
};

// Homogeneous collection: every trace has the same length and the label kind
// is fixed for the whole set.
class TraceSet {
public:
    TraceSet() = default;
    TraceSet(std::size_t trace_length, LabelKind kind) : length_(trace_length), kind_(kind) {}

    std::size_t trace_length() const noexcept { return length_; }
    LabelKind label_kind() const noexcept { return kind_; }
    std::size_t size() const noexcept { return traces_.size(); }
    bool empty() const noexcept { return traces_.empty(); }

    const Trace& operator[](std::size_t i) const { return traces_[i]; }
    std::span<const Trace> traces() const noexcept { return traces_; }
    auto begin() const noexcept { return traces_.begin(); }
    auto end() const noexcept { return traces_.end(); }

    ClassLabel label(std::size_t i) const noexcept { return traces_[i].label(kind_); }

    void reserve(std::size_t n) { traces_.reserve(n); }

    void push_back(Trace t) {
        if (t.samples.size() != length_)
            throw ValidationError("trace length " + std::to_string(t.samples.size()) +
                                  " does not match set length " + std::to_string(length_));
        if (t.n_averaged < 1)
            throw ValidationError("n_averaged must be >= 1");
        for (float s : t.samples)
            if (!std::isfinite(s))
                throw ValidationError("non-finite sample in trace");
        traces_.push_back(std::move(t));
    }

    void append(const TraceSet& other) {
        if (other.length_ != length_ || other.kind_ != kind_)
            throw ValidationError("cannot append trace sets with different length or label kind");
        traces_.insert(traces_.end(), other.traces_.begin(), other.traces_.end());
    }

    std::vector<std::uint8_t> labels() const {
        std::vector<std::uint8_t> out(traces_.size());
        for (std::size_t i = 0; i < traces_.size(); ++i)
            out[i] = label(i).value;
        return out;
    }

    // Subset by index, preserving order.
    TraceSet select(std::span<const std::size_t> idx) const {
        TraceSet out(length_, kind_);
        out.traces_.reserve(idx.size());
        for (auto i : idx)
            out.traces_.push_back(traces_.at(i));
        return out;
    }

    TraceSet head(std::size_t n) const {
        TraceSet out(length_, kind_);
        n = std::min(n, traces_.size());
        out.traces_.assign(traces_.begin(), traces_.begin() + static_cast<std::ptrdiff_t>(n));
        return out;
    }

    TraceSet with_label_kind(LabelKind k) const {
        TraceSet out = *this;
        out.kind_ = k;
        return out;
    }

private:
    std::size_t length_ = 0;
    LabelKind kind_ = LabelKind::KeyByte;
    std::vector<Trace> traces_;
};

// Merge several sets into one (same length and label kind).
inline TraceSet concat(std::span<const TraceSet> sets) {
    require(!sets.empty(), "nothing to concatenate");
    TraceSet out(sets.front().trace_length(), sets.front().label_kind());
    std::size_t n = 0;
    for (const auto& s : sets)
        n += s.size();
    out.reserve(n);
    for (const auto& s : sets)
        out.append(s);
    return out;
}

// Splits by device id (ascending), preserving trace order within each part.
inline std::vector<TraceSet> split_by_device(const TraceSet& set) {
    std::map<std::uint32_t, std::vector<std::size_t>> idx;
    for (std::size_t i = 0; i < set.size(); ++i)
        idx[set[i].device_id].push_back(i);
    std::vector<TraceSet> out;
    for (const auto& [id, v] : idx)
        out.push_back(set.select(v));
    return out;
}

// Splits by grid cell (row-major), preserving trace order within each part.
inline std::vector<TraceSet> split_by_location(const TraceSet& set) {
    std::map<std::pair<int, int>, std::vector<std::size_t>> idx;
    for (std::size_t i = 0; i < set.size(); ++i)
        idx[{set[i].location.row, set[i].location.col}].push_back(i);
    std::vector<TraceSet> out;
    for (const auto& [loc, v] : idx)
        out.push_back(set.select(v));
    return out;
}

// Sample-wise mean of a group of traces. Accumulates in double in the given
// order; metadata comes from the first trace and n_averaged is multiplied by
// the group size.
inline Trace mean_of(std::span<const Trace* const> group) {
    require(!group.empty(), "empty averaging group");
    const Trace& first = *group.front();
    std::vector<double> acc(first.samples.size(), 0.0);
    for (const Trace* t : group)
        for (std::size_t i = 0; i < acc.size(); ++i)
            acc[i] += t->samples[i];
    Trace out;
    out.samples.resize(acc.size());
    const double n = static_cast<double>(group.size());
    for (std::size_t i = 0; i < acc.size(); ++i)
        out.samples[i] = static_cast<float>(acc[i] / n);
    out.plaintext = first.plaintext;
    out.key = first.key;
    out.device_id = first.device_id;
    out.location = first.location;
    out.n_averaged = first.n_averaged * static_cast<std::uint32_t>(group.size());
    return out;
}

} // namespace xdsca
