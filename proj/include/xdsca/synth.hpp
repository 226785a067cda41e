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

// Synthetic EM trace generator with per-device process variation and a
// spatial leakage kernel over a scan grid.
//
// Sample model for one trace of a device at grid cell `loc`:
//
//   x[t] = dc_offset + coupling * (activity * b(t) + trigger * P(t - t0))
//          + sum_j P(t - p_j) * a(loc) * gain * jitter_j * L_j
//          + sum_k (u_k cos(2 pi f_k t / T) + v_k sin(2 pi f_k t / T)) + w[t]
//   L_j  = leak_scale * sum_b S[j][b] * W[j][b] * (bit_b(value_j) - c)
//
// b(t) is a slow data-independent baseline, P a raised-cosine pulse of
// pulse_width samples with P(0) = 1, t0 the position of a data-independent
// trigger transient. a(loc) is a Gaussian kernel around the hotspot, S the
// device-independent per-bit signature (1 +- contrast * Hadamard row), W the
// device's bit weights, c = 1/2 when leakage is centered, 0 otherwise. The first
// n_input_pois POIs leak the plaintext (even j) or plaintext ^ key (odd j); the
// rest leak sbox(plaintext ^ key).
//
// The per-sample noise (variance noise_sigma^2) has a correlated part, random
// per-trace amplitudes u_k, v_k of a few fixed interference tones, holding a
// share interference_fraction of the variance, and white Gaussian noise w.

#include <xdsca/aes.hpp>
#include <xdsca/error.hpp>
#include <xdsca/parallel.hpp>
#include <xdsca/random.hpp>
#include <xdsca/trace.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace xdsca {

struct GeneratorConfig {
    std::size_t trace_length = 3000;
    std::size_t n_pois = 11;
    std::size_t n_input_pois = 3;
    // Empty means the default evenly spaced layout.
    std::vector<std::size_t> poi_positions;

    double bit_weight_sigma = 0.10;
    double gain_sigma = 0.10;
    double offset_sigma = 0.05;
    double poi_jitter_sigma = 0.05;
    double coupling_sigma = 0.25;
    double activity_level = 8.0;
    double trigger_amplitude = 12.0;
    std::size_t trigger_position = 64;
    std::size_t pulse_width = 3; // odd
    double bit_contrast = 0.5;
    double leak_scale = 1.0;
    bool leak_centered = true;
    // Calibrated for 3.1 dB at the top POI of device 0 (see snr_calibrate).
    double noise_sigma = 1.2182;
    double interference_fraction = 0.0;
    // Tone frequencies in cycles per trace.
    std::vector<double> interference_cycles{2.3, 5.1, 9.7, 17.3, 31.9, 58.1};

    GridLocation hotspot{1, 2};
    double spatial_scale = 1.5;
    std::uint8_t grid_size = 10;
    std::uint64_t seed = 1;

    std::vector<std::size_t> resolved_poi_positions() const {
        if (!poi_positions.empty())
            return poi_positions;
        std::vector<std::size_t> pos(n_pois);
        const std::size_t spacing = trace_length / (n_pois + 1);
        for (std::size_t j = 0; j < n_pois; ++j)
            pos[j] = spacing * (j + 1);
        return pos;
    }

    void validate() const {
        require(trace_length >= 1, "must be positive", "generator.trace_length");
        require(n_pois >= 1, "must be positive", "generator.n_pois");
        require(n_input_pois <= n_pois, "cannot exceed n_pois", "generator.n_input_pois");
        require(poi_positions.empty() || poi_positions.size() == n_pois,
                "must list exactly n_pois positions", "generator.poi_positions");
        auto pos = resolved_poi_positions();
        std::set<std::size_t> uniq(pos.begin(), pos.end());
        require(uniq.size() == pos.size(), "positions must be distinct", "generator.poi_positions");
        require(*uniq.rbegin() < trace_length, "position outside the trace", "generator.poi_positions");
        for (auto [v, k] : {std::pair{bit_weight_sigma, "generator.bit_weight_sigma"},
                            {gain_sigma, "generator.gain_sigma"},
                            {offset_sigma, "generator.offset_sigma"},
                            {poi_jitter_sigma, "generator.poi_jitter_sigma"},
                            {coupling_sigma, "generator.coupling_sigma"},
                            {noise_sigma, "generator.noise_sigma"}})
            require(v >= 0 && std::isfinite(v), "must be finite and >= 0", k);
        require(std::isfinite(activity_level), "must be finite", "generator.activity_level");
        require(interference_fraction >= 0 && interference_fraction < 1, "must be in [0, 1)",
                "generator.interference_fraction");
        require(interference_fraction == 0 || !interference_cycles.empty(), "needs at least one tone",
                "generator.interference_cycles");
        for (double c : interference_cycles)
            require(std::isfinite(c) && c >= 0, "must be finite and >= 0", "generator.interference_cycles");
        require(std::isfinite(trigger_amplitude), "must be finite", "generator.trigger_amplitude");
        require(trigger_position < trace_length, "position outside the trace", "generator.trigger_position");
        require(pulse_width % 2 == 1 && pulse_width < trace_length, "must be odd and shorter than the trace",
                "generator.pulse_width");
        require(std::isfinite(bit_contrast) && std::abs(bit_contrast) < 1, "must be in (-1, 1)",
                "generator.bit_contrast");
        require(spatial_scale > 0, "must be > 0", "generator.spatial_scale");
        require(grid_size >= 1, "must be positive", "generator.grid_size");
        require(hotspot.row < grid_size && hotspot.col < grid_size, "outside the grid", "generator.hotspot");
    }
};

struct DeviceProfile {
    std::uint32_t device_id = 0;
    std::vector<std::array<double, 8>> bit_weights; // n_pois x 8
    double gain = 1.0;
    double dc_offset = 0.0;
    std::vector<double> poi_jitter;
    double coupling = 1.0;
    std::vector<double> baseline; // data-independent part of every trace, incl. dc_offset
    std::vector<double> tones;    // 2K x L interference basis (cos, sin per tone), row-major
};

// Sylvester Hadamard entry H8[row][col].
constexpr int hadamard8(std::size_t row, std::size_t col) noexcept {
    return (std::popcount(static_cast<unsigned>(row & col & 7u)) % 2 == 0) ? 1 : -1;
}

// Device-independent per-bit leakage signature: a balanced Hadamard row
// (1..7) added to the flat profile, with the sign alternating every 7 POIs so
// any 8 consecutive POIs have linearly independent signatures.
inline double bit_signature(const GeneratorConfig& cfg, std::size_t poi, int b) {
    const std::size_t row = 1 + poi % 7;
    const double sign = (poi / 7) % 2 == 0 ? 1.0 : -1.0;
    return 1.0 + sign * cfg.bit_contrast * hadamard8(row, static_cast<std::size_t>(b));
}

// Slow baseline shape, 1 +- 0.5 over the trace.
inline double baseline_shape(const GeneratorConfig& cfg, std::size_t t) {
    return 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * 1.5 * double(t) / double(cfg.trace_length));
}

// Raised-cosine pulse weight at offset d from its centre.
inline double pulse_shape(const GeneratorConfig& cfg, std::ptrdiff_t d) {
    const auto h = static_cast<std::ptrdiff_t>(cfg.pulse_width / 2);
    if (d < -h || d > h)
        return 0.0;
    const double c = std::cos(std::numbers::pi * double(d) / double(2 * h + 2));
    return c * c;
}

inline double spatial_gain(const GeneratorConfig& cfg, GridLocation loc) {
    const double dr = double(loc.row) - double(cfg.hotspot.row);
    const double dc = double(loc.col) - double(cfg.hotspot.col);
    return std::exp(-(dr * dr + dc * dc) / (2.0 * cfg.spatial_scale * cfg.spatial_scale));
}

inline void check_location(const GeneratorConfig& cfg, GridLocation loc) {
    if (loc.row >= cfg.grid_size || loc.col >= cfg.grid_size)
        throw ValidationError("location (" + std::to_string(loc.row) + "," + std::to_string(loc.col) +
                              ") outside the " + std::to_string(cfg.grid_size) + "x" +
                              std::to_string(cfg.grid_size) + " grid");
}

inline DeviceProfile gen_device(const GeneratorConfig& cfg, std::uint32_t device_id) {
    Rng rng = make_rng(cfg.seed, {stream::kDevice, device_id});
    std::normal_distribution<double> n01(0.0, 1.0);
    DeviceProfile p;
    p.device_id = device_id;
    p.bit_weights.resize(cfg.n_pois);
    for (auto& row : p.bit_weights)
        for (auto& w : row)
            w = std::max(0.05, 1.0 + cfg.bit_weight_sigma * n01(rng));
    p.gain = std::max(0.1, 1.0 + cfg.gain_sigma * n01(rng));
    p.dc_offset = cfg.offset_sigma * n01(rng);
    p.poi_jitter.resize(cfg.n_pois);
    for (auto& j : p.poi_jitter)
        j = std::max(0.05, 1.0 + cfg.poi_jitter_sigma * n01(rng));
    p.coupling = std::max(0.1, 1.0 + cfg.coupling_sigma * n01(rng));
    p.baseline.resize(cfg.trace_length);
    for (std::size_t t = 0; t < cfg.trace_length; ++t)
        p.baseline[t] = p.dc_offset + p.coupling * cfg.activity_level * baseline_shape(cfg, t);
    const auto h = static_cast<std::ptrdiff_t>(cfg.pulse_width / 2);
    for (std::ptrdiff_t d = -h; d <= h; ++d) {
        const auto t = static_cast<std::ptrdiff_t>(cfg.trigger_position) + d;
        if (t >= 0 && t < static_cast<std::ptrdiff_t>(cfg.trace_length))
            p.baseline[std::size_t(t)] += p.coupling * cfg.trigger_amplitude * pulse_shape(cfg, d);
    }
    const std::size_t L = cfg.trace_length;
    p.tones.resize(2 * cfg.interference_cycles.size() * L);
    for (std::size_t k = 0; k < cfg.interference_cycles.size(); ++k)
        for (std::size_t t = 0; t < L; ++t) {
            const double ph = 2.0 * std::numbers::pi * cfg.interference_cycles[k] * double(t) / double(L);
            p.tones[(2 * k) * L + t] = std::cos(ph);
            p.tones[(2 * k + 1) * L + t] = std::sin(ph);
        }
    return p;
}

// Value leaked at POI j.
inline std::uint8_t leaked_value(const GeneratorConfig& cfg, std::size_t j, std::uint8_t pt, std::uint8_t key) {
    if (j < cfg.n_input_pois)
        return (j % 2 == 0) ? pt : static_cast<std::uint8_t>(pt ^ key);
    return intermediate(pt, key);
}

// Data-dependent pulse amplitude at each POI.
inline std::vector<double> poi_signal(const DeviceProfile& dev, const GeneratorConfig& cfg, std::uint8_t pt,
                                      std::uint8_t key, GridLocation loc) {
    const double a = spatial_gain(cfg, loc);
    const double centre = cfg.leak_centered ? 0.5 : 0.0;
    std::vector<double> out(cfg.n_pois);
    for (std::size_t j = 0; j < cfg.n_pois; ++j) {
        const std::uint8_t v = leaked_value(cfg, j, pt, key);
        double leak = 0.0;
        for (int b = 0; b < 8; ++b)
            leak += bit_signature(cfg, j, b) * dev.bit_weights[j][b] * (bit(v, b) - centre);
        leak *= cfg.leak_scale;
        out[j] = a * dev.gain * dev.poi_jitter[j] * leak;
    }
    return out;
}

inline Trace gen_trace(const DeviceProfile& dev, const GeneratorConfig& cfg, std::uint8_t pt, std::uint8_t key,
                       GridLocation loc, Rng& rng) {
    check_location(cfg, loc);
    Trace t;
    t.plaintext = pt;
    t.key = key;
    t.device_id = dev.device_id;
    t.location = loc;
    t.samples.resize(cfg.trace_length);
    std::normal_distribution<double> n01(0.0, 1.0);
    require(dev.baseline.size() == cfg.trace_length, "device profile does not match the generator config");
    std::vector<double> x(dev.baseline);
    const auto pos = cfg.resolved_poi_positions();
    const auto sig = poi_signal(dev, cfg, pt, key, loc);
    const auto h = static_cast<std::ptrdiff_t>(cfg.pulse_width / 2);
    const auto L = static_cast<std::ptrdiff_t>(cfg.trace_length);
    for (std::size_t j = 0; j < pos.size(); ++j)
        for (std::ptrdiff_t d = -h; d <= h; ++d) {
            const auto i = static_cast<std::ptrdiff_t>(pos[j]) + d;
            if (i >= 0 && i < L)
                x[std::size_t(i)] += sig[j] * pulse_shape(cfg, d);
        }
    const std::size_t K = cfg.interference_cycles.size();
    if (cfg.interference_fraction > 0) {
        require(dev.tones.size() == 2 * K * x.size(), "device profile does not match the generator config");
        const double amp = cfg.noise_sigma * std::sqrt(cfg.interference_fraction / double(K));
        for (std::size_t r = 0; r < 2 * K; ++r) {
            const double c = amp * n01(rng);
            const double* row = dev.tones.data() + r * x.size();
            for (std::size_t i = 0; i < x.size(); ++i)
                x[i] += c * row[i];
        }
    }
    const double white = cfg.noise_sigma * std::sqrt(1.0 - cfg.interference_fraction);
    for (std::size_t i = 0; i < x.size(); ++i)
        t.samples[i] = static_cast<float>(x[i] + white * n01(rng));
    return t;
}

// Key selection for a campaign.
struct KeyMode {
    enum class Kind : std::uint8_t { Fixed, RandomPerDevice, Sweep };
    Kind kind = Kind::Sweep;
    std::uint8_t key = 0;

    static KeyMode fixed(std::uint8_t k) { return {Kind::Fixed, k}; }
    static KeyMode random_per_device() { return {Kind::RandomPerDevice, 0}; }
    // Key cycles through all 256 values (balanced), one per input group.
    static KeyMode sweep() { return {Kind::Sweep, 0}; }
};

struct CampaignSpec {
    std::size_t n_devices = 1;
    std::uint32_t first_device_id = 0;
    std::size_t traces_per_device = 5120;
    std::size_t repeats_per_input = 20;
    KeyMode key_mode = KeyMode::sweep();
    // Fixed plaintext for every group. Without it, plaintexts are chosen so the
    // intermediate is class-balanced (fixed/per-device keys) or drawn uniformly
    // (sweep).
    std::optional<std::uint8_t> fixed_plaintext = std::uint8_t{0};
    LabelKind label_kind = LabelKind::KeyByte;
    GridLocation location{1, 2};

    std::size_t groups() const { return traces_per_device / repeats_per_input; }

    void validate() const {
        require(repeats_per_input >= 1, "must be positive", "campaign.repeats_per_input");
        require(traces_per_device >= 1, "must be positive", "campaign.traces_per_device");
        require(traces_per_device % repeats_per_input == 0,
                "traces_per_device must be divisible by repeats_per_input", "campaign.traces_per_device");
        require(n_devices >= 1, "must be positive", "campaign.n_devices");
    }
};

struct InputPair {
    std::uint8_t plaintext = 0;
    std::uint8_t key = 0;
};

// The (plaintext, key) of every input group of one device. The varying byte
// (key under Sweep, the intermediate otherwise) is balanced: each run of 256
// groups is a seeded permutation of 0..255.
inline std::vector<InputPair> plan_inputs(const GeneratorConfig& cfg, const CampaignSpec& spec,
                                          std::uint32_t device_id) {
    spec.validate();
    const std::size_t n = spec.groups();
    std::vector<std::uint8_t> slots(n);
    {
        Rng rng = make_rng(cfg.seed, {stream::kLabels, device_id});
        std::array<std::uint8_t, 256> perm{};
        for (std::size_t i = 0; i < n; ++i) {
            if (i % 256 == 0) {
                for (int v = 0; v < 256; ++v)
                    perm[v] = static_cast<std::uint8_t>(v);
                std::shuffle(perm.begin(), perm.end(), rng);
            }
            slots[i] = perm[i % 256];
        }
    }
    std::uint8_t device_key = spec.key_mode.key;
    if (spec.key_mode.kind == KeyMode::Kind::RandomPerDevice) {
        Rng rng = make_rng(cfg.seed, {stream::kDeviceKey, device_id});
        device_key = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(0, 255)(rng));
    }
    Rng pt_rng = make_rng(cfg.seed, {stream::kPlaintext, device_id});
    std::uniform_int_distribution<int> byte(0, 255);
    std::vector<InputPair> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (spec.key_mode.kind == KeyMode::Kind::Sweep) {
            out[i].key = slots[i];
            out[i].plaintext = spec.fixed_plaintext ? *spec.fixed_plaintext : static_cast<std::uint8_t>(byte(pt_rng));
        } else {
            out[i].key = device_key;
            out[i].plaintext = spec.fixed_plaintext
                                   ? *spec.fixed_plaintext
                                   : static_cast<std::uint8_t>(inv_sbox(slots[i]) ^ device_key);
        }
    }
    return out;
}

inline std::uint64_t location_code(GridLocation loc) { return (std::uint64_t(loc.row) << 8) | loc.col; }

// Raw trace `index` of a device campaign at `loc` (index = group * repeats + r).
inline Trace campaign_trace(const DeviceProfile& dev, const GeneratorConfig& cfg, InputPair in, GridLocation loc,
                            std::uint64_t index) {
    Rng rng = make_rng(cfg.seed, {stream::kTrace, dev.device_id, location_code(loc), index});
    return gen_trace(dev, cfg, in.plaintext, in.key, loc, rng);
}

// Traces of one device. With n_average > 1 each group's repeats are averaged in
// chunks of n_average while generating (an incomplete trailing chunk is
// dropped); the result is bit-identical to average_traces over the raw set.
inline TraceSet gen_device_traces(const GeneratorConfig& cfg, const DeviceProfile& dev, const CampaignSpec& spec,
                                  std::size_t n_average = 1, unsigned threads = 1) {
    cfg.validate();
    spec.validate();
    require(n_average >= 1, "averaging factor must be >= 1");
    check_location(cfg, spec.location);
    const auto inputs = plan_inputs(cfg, spec, dev.device_id);
    const std::size_t reps = spec.repeats_per_input;
    const std::size_t per_group = reps / n_average;
    std::vector<Trace> out(inputs.size() * per_group);
    parallel_for(inputs.size(), threads, [&](std::size_t g) {
        std::vector<Trace> raw(n_average);
        std::vector<const Trace*> ptrs(n_average);
        for (std::size_t c = 0; c < per_group; ++c) {
            for (std::size_t r = 0; r < n_average; ++r) {
                raw[r] = campaign_trace(dev, cfg, inputs[g], spec.location, g * reps + c * n_average + r);
                ptrs[r] = &raw[r];
            }
            out[g * per_group + c] = n_average == 1 ? std::move(raw[0]) : mean_of(ptrs);
        }
    });
    TraceSet set(cfg.trace_length, spec.label_kind);
    set.reserve(out.size());
    for (auto& t : out)
        set.push_back(std::move(t));
    return set;
}

// One raw TraceSet per device, devices first_device_id .. first_device_id + n - 1.
inline std::vector<TraceSet> gen_campaign(const GeneratorConfig& cfg, const CampaignSpec& spec, unsigned threads = 1) {
    spec.validate();
    std::vector<TraceSet> sets;
    sets.reserve(spec.n_devices);
    for (std::size_t d = 0; d < spec.n_devices; ++d) {
        const auto dev = gen_device(cfg, spec.first_device_id + static_cast<std::uint32_t>(d));
        sets.push_back(gen_device_traces(cfg, dev, spec, 1, threads));
    }
    return sets;
}

// Fixed-vs-random TVLA groups at one cell: the fixed group encrypts
// fixed_plaintext, the random group uniformly random plaintexts; both use `key`.
inline std::pair<TraceSet, TraceSet> gen_tvla_sets(const GeneratorConfig& cfg, const DeviceProfile& dev,
                                                   GridLocation loc, std::size_t per_group,
                                                   std::uint8_t fixed_plaintext, std::uint8_t key,
                                                   std::uint64_t stream_tag = 0) {
    check_location(cfg, loc);
    TraceSet fixed(cfg.trace_length, LabelKind::SboxOutput);
    TraceSet random(cfg.trace_length, LabelKind::SboxOutput);
    fixed.reserve(per_group);
    random.reserve(per_group);
    for (std::size_t i = 0; i < per_group; ++i) {
        for (int group = 0; group < 2; ++group) {
            Rng rng = make_rng(cfg.seed, {stream::kTvla, dev.device_id, location_code(loc), stream_tag,
                                          static_cast<std::uint64_t>(group), i});
            const auto pt = group == 0 ? fixed_plaintext
                                       : static_cast<std::uint8_t>(std::uniform_int_distribution<int>(0, 255)(rng));
            auto t = gen_trace(dev, cfg, pt, key, loc, rng);
            (group == 0 ? fixed : random).push_back(std::move(t));
        }
    }
    return {std::move(fixed), std::move(random)};
}

struct NoiseCalibration {
    double noise_sigma = 0;
    std::size_t top_poi = 0;          // index into the POI list
    double signal_variance = 0;       // at the top POI
    double predicted_snr_db = 0;
    bool clamped = false;
    std::string warning;
};

// Noise level giving `target_snr_db` at the most informative intermediate-value
// POI of device 0 at the hotspot, with classes defined by the intermediate byte. The signal
// variance is computed exactly by enumerating all 256 intermediates.
inline NoiseCalibration snr_calibrate(const GeneratorConfig& cfg, double target_snr_db, double min_sigma = 1e-4) {
    cfg.validate();
    require(std::isfinite(target_snr_db), "target SNR must be finite", "generator.target_snr_db");
    const auto dev = gen_device(cfg, 0);
    std::vector<double> sum(cfg.n_pois, 0.0), sum2(cfg.n_pois, 0.0);
    for (int v = 0; v < 256; ++v) {
        const auto pt = inv_sbox(static_cast<std::uint8_t>(v));
        const auto s = poi_signal(dev, cfg, pt, 0, cfg.hotspot);
        for (std::size_t j = 0; j < cfg.n_pois; ++j) {
            sum[j] += s[j];
            sum2[j] += s[j] * s[j];
        }
    }
    NoiseCalibration out;
    const std::size_t first = cfg.n_input_pois < cfg.n_pois ? cfg.n_input_pois : 0;
    for (std::size_t j = first; j < cfg.n_pois; ++j) {
        const double var = sum2[j] / 256.0 - (sum[j] / 256.0) * (sum[j] / 256.0);
        if (var > out.signal_variance) {
            out.signal_variance = var;
            out.top_poi = j;
        }
    }
    if (!(out.signal_variance > 0))
        throw ValidationError("target SNR unreachable: the configuration has no data-dependent leakage",
                              "generator.target_snr_db");
    const double snr_lin = std::pow(10.0, target_snr_db / 10.0);
    out.noise_sigma = std::sqrt(out.signal_variance / snr_lin);
    if (out.noise_sigma < min_sigma) {
        out.noise_sigma = min_sigma;
        out.clamped = true;
        out.warning = "target SNR above the searchable range; returning the smallest noise level";
    }
    out.predicted_snr_db = 10.0 * std::log10(out.signal_variance / (out.noise_sigma * out.noise_sigma));
    return out;
}

} // namespace xdsca
