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

// File formats: EMT1 binary trace files, CSV import/export, atomic writes.
//
// EMT1 layout (little-endian):
//   header  "EMT1" | u16 version | u64 n_traces | u32 trace_length |
//           u8 label_kind | 16 reserved zero bytes
//   record  u16 device_id | u8 row | u8 col | u8 plaintext | u8 key |
//           u16 n_averaged | trace_length x f32 samples

#include <xdsca/bytes.hpp>
#include <xdsca/error.hpp>
#include <xdsca/trace.hpp>

#include <nlohmann/json.hpp>

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unistd.h>
#include <vector>

namespace xdsca {

namespace fs = std::filesystem;

inline constexpr std::uint16_t kTraceFormatVersion = 1;
inline constexpr std::size_t kTraceHeaderSize = 4 + 2 + 8 + 4 + 1 + 16;

inline std::size_t trace_record_size(std::size_t trace_length) { return 8 + 4 * trace_length; }

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("cannot open '" + path.string() + "'", "input");
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

// Writes to a sibling temporary file and renames it over the target.
inline void write_file_atomic(const fs::path& path, std::string_view data) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw RuntimeError("cannot write '" + tmp.string() + "'");
        out.write(data.data(), std::streamsize(data.size()));
        out.flush();
        if (!out)
            throw RuntimeError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw RuntimeError("cannot rename into '" + path.string() + "': " + ec.message());
    }
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// EMT1

inline std::string encode_traces(const TraceSet& set) {
    ByteWriter w;
    w.put_bytes("EMT1");
    w.put<std::uint16_t>(kTraceFormatVersion);
    w.put<std::uint64_t>(set.size());
    if (set.trace_length() > std::numeric_limits<std::uint32_t>::max())
        throw ValidationError("trace length does not fit the file format");
    w.put<std::uint32_t>(std::uint32_t(set.trace_length()));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(set.label_kind()));
    w.put_bytes(std::string(16, '\0'));
    for (const auto& t : set) {
        if (t.device_id > 0xFFFF)
            throw ValidationError("device id " + std::to_string(t.device_id) + " does not fit in 16 bits");
        if (t.n_averaged > 0xFFFF)
            throw ValidationError("averaging count " + std::to_string(t.n_averaged) + " does not fit in 16 bits");
        w.put<std::uint16_t>(std::uint16_t(t.device_id));
        w.put<std::uint8_t>(t.location.row);
        w.put<std::uint8_t>(t.location.col);
        w.put<std::uint8_t>(t.plaintext);
        w.put<std::uint8_t>(t.key);
        w.put<std::uint16_t>(std::uint16_t(t.n_averaged));
        w.put_bytes(std::string_view(reinterpret_cast<const char*>(t.samples.data()), t.samples.size() * 4));
    }
    return w.take();
}

inline TraceSet decode_traces(std::string_view data) {
    ByteReader r(data);
    if (data.size() < 4 || r.get_bytes(4) != "EMT1")
        throw ValidationError("not an EMT1 trace file (bad magic)", "input");
    const auto version = r.get<std::uint16_t>();
    if (version != kTraceFormatVersion)
        throw ValidationError("unsupported trace file version " + std::to_string(version), "input");
    const auto n = r.get<std::uint64_t>();
    const auto L = r.get<std::uint32_t>();
    const auto kind = r.get<std::uint8_t>();
    if (kind > 1)
        throw ValidationError("unknown label kind " + std::to_string(kind) + " in trace file", "input");
    const auto reserved = r.get_bytes(16);
    if (reserved.find_first_not_of('\0') != std::string_view::npos)
        throw ValidationError("nonzero reserved header bytes", "input");
    if (L == 0)
        throw ValidationError("trace length 0 in trace file", "input");
    const auto body = data.size() - kTraceHeaderSize;
    if (n > body / trace_record_size(L) || body != n * trace_record_size(L))
        throw ValidationError("trace file size does not match its header (" + std::to_string(n) + " records of " +
                                  std::to_string(trace_record_size(L)) + " bytes)",
                              "input");
    TraceSet set(L, static_cast<LabelKind>(kind));
    set.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        Trace t;
        t.device_id = r.get<std::uint16_t>();
        t.location.row = r.get<std::uint8_t>();
        t.location.col = r.get<std::uint8_t>();
        t.plaintext = r.get<std::uint8_t>();
        t.key = r.get<std::uint8_t>();
        t.n_averaged = r.get<std::uint16_t>();
        t.samples.resize(L);
        const auto raw = r.get_bytes(std::size_t(L) * 4);
        std::memcpy(t.samples.data(), raw.data(), raw.size());
        try {
            set.push_back(std::move(t));
        } catch (const ValidationError& e) {
            throw ValidationError("record " + std::to_string(i) + ": " + e.what(), "input");
        }
    }
    return set;
}

// ---------------------------------------------------------------------------
// CSV

// Shortest representation that parses back to the same value.
inline std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

inline std::string csv_header(std::size_t L) {
    std::string h = "device_id,row,col,plaintext,key,n_averaged";
    for (std::size_t i = 0; i < L; ++i)
        h += ",s" + std::to_string(i);
    return h;
}

inline std::string export_csv(const TraceSet& set) {
    std::string out = csv_header(set.trace_length()) + "\n";
    char buf[64];
    for (const auto& t : set) {
        out += std::to_string(t.device_id) + "," + std::to_string(t.location.row) + "," +
               std::to_string(t.location.col) + "," + std::to_string(t.plaintext) + "," + std::to_string(t.key) +
               "," + std::to_string(t.n_averaged);
        for (float s : t.samples) {
            auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), s);
            out += ',';
            out.append(buf, p);
        }
        out += '\n';
    }
    return out;
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> f;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        f.push_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos)
            break;
        start = comma + 1;
    }
    return f;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

// Decimal or 0x-prefixed hexadecimal unsigned integer no larger than max.
inline std::uint64_t parse_uint(std::string_view s, std::uint64_t max, const std::string& where) {
    s = trim(s);
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        base = 16;
        s.remove_prefix(2);
    }
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size() || v > max)
        throw ValidationError(where + ": expected an integer in [0, " + std::to_string(max) + "], got '" +
                                  std::string(s) + "'",
                              "input");
    return v;
}

} // namespace detail

inline TraceSet parse_csv(std::string_view text, LabelKind kind = LabelKind::KeyByte) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos)
            nl = text.size();
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    while (!lines.empty() && detail::trim(lines.back()).empty())
        lines.pop_back();
    if (lines.empty())
        throw ValidationError("empty CSV file", "input");
    const auto head = detail::split_csv(detail::trim(lines[0]));
    static constexpr std::string_view kMeta[] = {"device_id", "row", "col", "plaintext", "key", "n_averaged"};
    if (head.size() < 7)
        throw ValidationError("CSV header needs the 6 metadata columns and at least one sample", "input");
    for (std::size_t i = 0; i < head.size(); ++i) {
        const auto want = i < 6 ? std::string(kMeta[i]) : "s" + std::to_string(i - 6);
        if (detail::trim(head[i]) != want)
            throw ValidationError("CSV header column " + std::to_string(i + 1) + " must be '" + want + "'", "input");
    }
    const std::size_t L = head.size() - 6;
    TraceSet set(L, kind);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto where = "CSV row " + std::to_string(r + 1);
        const auto f = detail::split_csv(detail::trim(lines[r]));
        if (f.size() != head.size())
            throw ValidationError(where + ": expected " + std::to_string(head.size()) + " fields (" +
                                      std::to_string(L) + " samples), got " + std::to_string(f.size()),
                                  "input");
        Trace t;
        t.device_id = std::uint32_t(detail::parse_uint(f[0], 0xFFFF, where));
        t.location.row = std::uint8_t(detail::parse_uint(f[1], 255, where));
        t.location.col = std::uint8_t(detail::parse_uint(f[2], 255, where));
        t.plaintext = std::uint8_t(detail::parse_uint(f[3], 255, where));
        t.key = std::uint8_t(detail::parse_uint(f[4], 255, where));
        t.n_averaged = std::uint32_t(detail::parse_uint(f[5], 0xFFFF, where));
        if (t.n_averaged == 0)
            throw ValidationError(where + ": n_averaged must be >= 1", "input");
        t.samples.resize(L);
        for (std::size_t i = 0; i < L; ++i) {
            const auto s = detail::trim(f[6 + i]);
            float v = 0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (s.empty() || ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
                throw ValidationError(where + ", sample " + std::to_string(i) + ": not a finite number '" +
                                          std::string(s) + "'",
                                      "input");
            t.samples[i] = v;
        }
        set.push_back(std::move(t));
    }
    return set;
}

inline TraceSet import_csv(const fs::path& path, LabelKind kind = LabelKind::KeyByte) {
    return parse_csv(read_file(path), kind);
}

inline bool is_csv_path(const fs::path& p) {
    auto ext = p.extension().string();
    for (auto& c : ext)
        c = char(std::tolower(static_cast<unsigned char>(c)));
    return ext == ".csv";
}

// Reads an EMT1 file, or imports it when the extension is .csv.
inline TraceSet read_traces(const fs::path& path, LabelKind csv_kind = LabelKind::KeyByte) {
    return is_csv_path(path) ? import_csv(path, csv_kind) : decode_traces(read_file(path));
}

inline void write_traces(const fs::path& path, const TraceSet& set) {
    write_file_atomic(path, is_csv_path(path) ? export_csv(set) : encode_traces(set));
}

} // namespace xdsca
