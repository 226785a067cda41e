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

// Difference-of-means POI search and greedy centroid-distance device selection.

#include <xdsca/aes.hpp>
#include <xdsca/error.hpp>
#include <xdsca/random.hpp>
#include <xdsca/trace.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace xdsca {

struct PoiPair {
    std::vector<std::size_t> indices; // descending score
    std::vector<double> dom_scores;   // per sample
};

// Per-sample sum over Hamming-weight class pairs of |mean_c1 - mean_c2|,
// classes taken from the HW of the first-round S-box output.
inline std::vector<double> dom_scores(const TraceSet& set) {
    const auto L = set.trace_length();
    std::array<std::vector<double>, 9> sum;
    std::array<std::size_t, 9> count{};
    for (const auto& t : set) {
        const auto c = hamming_weight(t.intermediate_value());
        if (sum[c].empty())
            sum[c].assign(L, 0.0);
        for (std::size_t i = 0; i < L; ++i)
            sum[c][i] += t.samples[i];
        ++count[c];
    }
    std::vector<int> present;
    for (int c = 0; c < 9; ++c)
        if (count[c] > 0) {
            present.push_back(c);
            for (auto& v : sum[c])
                v /= double(count[c]);
        }
    if (present.size() < 2)
        throw ValidationError("POI search needs traces from at least 2 Hamming-weight classes");
    std::vector<double> score(L, 0.0);
    for (std::size_t a = 0; a < present.size(); ++a)
        for (std::size_t b = a + 1; b < present.size(); ++b)
            for (std::size_t i = 0; i < L; ++i)
                score[i] += std::abs(sum[present[a]][i] - sum[present[b]][i]);
    return score;
}

// Greedy top-k by score (ties: lowest index), each pick at least
// min_separation samples away from earlier picks.
inline PoiPair find_pois(const TraceSet& set, std::size_t k = 2, std::size_t min_separation = 5) {
    require(k >= 1, "must be >= 1", "select.n_pois");
    PoiPair p;
    p.dom_scores = dom_scores(set);
    std::vector<std::size_t> order(p.dom_scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p.dom_scores[a] > p.dom_scores[b]; });
    for (auto i : order) {
        if (p.indices.size() == k)
            break;
        const bool far = std::all_of(p.indices.begin(), p.indices.end(), [&](std::size_t j) {
            return (i > j ? i - j : j - i) >= min_separation;
        });
        if (far)
            p.indices.push_back(i);
    }
    if (p.indices.size() < k)
        throw ValidationError("cannot place " + std::to_string(k) + " POIs " + std::to_string(min_separation) +
                                  " samples apart in traces of length " + std::to_string(set.trace_length()),
                              "select.min_separation");
    return p;
}

struct DeviceMean {
    std::uint32_t device_id = 0;
    std::vector<double> mu; // one entry per POI
};

using DeviceMeanMap = std::vector<DeviceMean>;

// Mean amplitude at the POI columns for each device's traces.
inline DeviceMeanMap device_means(std::span<const TraceSet> per_device, const PoiPair& pois) {
    DeviceMeanMap map;
    for (const auto& set : per_device) {
        if (set.empty())
            throw ValidationError("device trace set is empty");
        DeviceMean m{set[0].device_id, std::vector<double>(pois.indices.size(), 0.0)};
        for (const auto& t : set) {
            if (t.device_id != m.device_id)
                throw ValidationError("trace set mixes devices " + std::to_string(m.device_id) + " and " +
                                      std::to_string(t.device_id));
            for (std::size_t j = 0; j < pois.indices.size(); ++j) {
                require(pois.indices[j] < t.samples.size(), "POI index outside the trace");
                m.mu[j] += t.samples[pois.indices[j]];
            }
        }
        for (auto& v : m.mu)
            v /= double(set.size());
        map.push_back(std::move(m));
    }
    return map;
}

enum class SelectionMode { Dissimilar, Similar, Random };

inline std::string_view to_string(SelectionMode m) {
    switch (m) {
    case SelectionMode::Dissimilar: return "dissimilar";
    case SelectionMode::Similar: return "similar";
    case SelectionMode::Random: return "random";
    }
    return "?";
}

inline SelectionMode selection_mode_from_string(std::string_view s) {
    for (auto m : {SelectionMode::Dissimilar, SelectionMode::Similar, SelectionMode::Random})
        if (to_string(m) == s)
            return m;
    throw ValidationError("unknown selection mode '" + std::string(s) + "'", "select.mode");
}

struct SelectionResult {
    std::vector<std::uint32_t> devices;
    SelectionMode mode = SelectionMode::Dissimilar;
    std::vector<double> distances; // distance of each added device to the running centroid

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["mode"] = to_string(mode);
        j["devices"] = devices;
        nlohmann::json steps = nlohmann::json::array();
        for (std::size_t i = 0; i < devices.size(); ++i) {
            nlohmann::json s{{"step", i + 1}, {"device", devices[i]}};
            if (i > 0 && i - 1 < distances.size())
                s["distance_to_centroid"] = distances[i - 1];
            steps.push_back(std::move(s));
        }
        j["steps"] = std::move(steps);
        return j;
    }
};

inline double euclidean(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// Greedy selection: start from `first` (default lowest id), then repeatedly add
// the remaining device farthest from (Dissimilar) or nearest to (Similar) the
// centroid of the devices chosen so far. Ties go to the lowest device id.
inline SelectionResult select_devices(const DeviceMeanMap& map, std::size_t n_dev, SelectionMode mode,
                                      std::uint64_t seed = 0, std::optional<std::uint32_t> first = std::nullopt) {
    require(!map.empty(), "device mean map is empty");
    require(n_dev >= 1, "must be >= 1", "select.n_devices");
    if (n_dev > map.size())
        throw ValidationError("requested " + std::to_string(n_dev) + " devices but only " +
                                  std::to_string(map.size()) + " are available",
                              "select.n_devices");
    std::vector<std::size_t> ids(map.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    std::stable_sort(ids.begin(), ids.end(),
                     [&](std::size_t a, std::size_t b) { return map[a].device_id < map[b].device_id; });
    for (std::size_t i = 1; i < ids.size(); ++i)
        require(map[ids[i]].device_id != map[ids[i - 1]].device_id, "duplicate device id in mean map");

    SelectionResult res;
    res.mode = mode;
    if (mode == SelectionMode::Random) {
        auto rng = make_rng(seed, {stream::kSelect});
        std::shuffle(ids.begin(), ids.end(), rng);
        for (std::size_t i = 0; i < n_dev; ++i)
            res.devices.push_back(map[ids[i]].device_id);
        return res;
    }

    std::size_t start = 0;
    if (first) {
        auto it = std::find_if(ids.begin(), ids.end(), [&](std::size_t i) { return map[i].device_id == *first; });
        if (it == ids.end())
            throw ValidationError("start device " + std::to_string(*first) + " not in the mean map",
                                  "select.first_device");
        start = std::size_t(it - ids.begin());
    }
    std::vector<std::size_t> pool = ids;
    const auto dim = map[pool[start]].mu.size();
    std::vector<double> sum(map[pool[start]].mu);
    res.devices.push_back(map[pool[start]].device_id);
    pool.erase(pool.begin() + std::ptrdiff_t(start));
    std::vector<double> centroid(dim);
    while (res.devices.size() < n_dev) {
        for (std::size_t d = 0; d < dim; ++d)
            centroid[d] = sum[d] / double(res.devices.size());
        std::size_t pick = 0;
        double best = euclidean(map[pool[0]].mu, centroid);
        for (std::size_t i = 1; i < pool.size(); ++i) {
            const double dist = euclidean(map[pool[i]].mu, centroid);
            if (mode == SelectionMode::Dissimilar ? dist > best : dist < best) {
                best = dist;
                pick = i;
            }
        }
        res.distances.push_back(best);
        res.devices.push_back(map[pool[pick]].device_id);
        for (std::size_t d = 0; d < dim; ++d)
            sum[d] += map[pool[pick]].mu[d];
        pool.erase(pool.begin() + std::ptrdiff_t(pick));
    }
    return res;
}

// Sum of Euclidean distances of the chosen points to their own centroid.
inline double centroid_dispersion(const DeviceMeanMap& map, std::span<const std::uint32_t> devices) {
    require(!devices.empty(), "no devices given");
    std::vector<const DeviceMean*> pts;
    for (auto id : devices) {
        auto it = std::find_if(map.begin(), map.end(), [&](const DeviceMean& m) { return m.device_id == id; });
        require(it != map.end(), "device " + std::to_string(id) + " not in the mean map");
        pts.push_back(&*it);
    }
    const auto dim = pts[0]->mu.size();
    std::vector<double> c(dim, 0.0);
    for (auto* p : pts)
        for (std::size_t d = 0; d < dim; ++d)
            c[d] += p->mu[d] / double(pts.size());
    double s = 0;
    for (auto* p : pts)
        s += euclidean(p->mu, c);
    return s;
}

} // namespace xdsca
