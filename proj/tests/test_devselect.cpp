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

#include <xdsca/devselect.hpp>
#include <xdsca/synth.hpp>

#include <gtest/gtest.h>

#include <algorithm>

using namespace xdsca;

namespace {

Trace with_intermediate(std::uint8_t v, std::vector<float> s, std::uint32_t dev = 0) {
    Trace t;
    t.key = 0;
    t.plaintext = inv_sbox(v);
    t.samples = std::move(s);
    t.device_id = dev;
    return t;
}

DeviceMeanMap line_map() {
    DeviceMeanMap m;
    const double pos[] = {0, 1, 2, 3, 10};
    for (std::uint32_t i = 0; i < 5; ++i)
        m.push_back({i + 1, {pos[i]}});
    return m;
}

GeneratorConfig small_config() {
    GeneratorConfig c;
    c.trace_length = 600;
    c.n_pois = 5;
    c.n_input_pois = 1;
    c.trigger_position = 10;
    return c;
}

std::vector<TraceSet> device_sets(const GeneratorConfig& c, std::size_t n_dev, std::size_t traces) {
    CampaignSpec s;
    s.n_devices = n_dev;
    s.traces_per_device = traces;
    s.repeats_per_input = 1;
    return gen_campaign(c, s);
}

} // namespace

TEST(Dom, HandBuiltClassMeans) {
    TraceSet s(3, LabelKind::KeyByte);
    s.push_back(with_intermediate(0x00, {0, 1, 0}));
    s.push_back(with_intermediate(0x00, {0, 1, 0}));
    s.push_back(with_intermediate(0x01, {0, 3, 0}));
    s.push_back(with_intermediate(0x02, {0, 3, 0}));
    const auto d = dom_scores(s);
    EXPECT_DOUBLE_EQ(d[1], 2.0);
    EXPECT_DOUBLE_EQ(d[0], 0.0);
    const auto p = find_pois(s, 1, 1);
    EXPECT_EQ(p.indices, (std::vector<std::size_t>{1}));
}

TEST(Dom, SingleClassRejected) {
    TraceSet s(2, LabelKind::KeyByte);
    s.push_back(with_intermediate(0x01, {0, 1}));
    s.push_back(with_intermediate(0x02, {1, 1}));
    EXPECT_THROW(dom_scores(s), ValidationError);
}

TEST(Pois, NoiselessTracesHitGeneratorPositions) {
    auto c = small_config();
    c.noise_sigma = 0;
    const auto sets = device_sets(c, 1, 1024);
    const auto p = find_pois(sets[0], 2, 5);
    const auto pos = c.resolved_poi_positions();
    for (auto i : p.indices)
        EXPECT_NE(std::find(pos.begin(), pos.end(), i), pos.end()) << i;
}

TEST(Pois, SeparationIsEnforced) {
    TraceSet s(6, LabelKind::KeyByte);
    s.push_back(with_intermediate(0x00, {0, 9, 8, 0, 0, 1}));
    s.push_back(with_intermediate(0x03, {0, 0, 0, 0, 0, 0}));
    const auto p = find_pois(s, 2, 3);
    EXPECT_EQ(p.indices, (std::vector<std::size_t>{1, 5}));
    EXPECT_THROW(find_pois(s, 3, 3), ValidationError);
}

TEST(DeviceMeans, AveragesPoiColumns) {
    TraceSet s(3, LabelKind::KeyByte);
    s.push_back(with_intermediate(0, {1, 9, 2}, 4));
    s.push_back(with_intermediate(0, {3, 9, 4}, 4));
    PoiPair p;
    p.indices = {0, 2};
    const std::vector<TraceSet> sets{s, s};
    const auto m = device_means(sets, p);
    ASSERT_EQ(m.size(), 2u);
    EXPECT_EQ(m[0].device_id, 4u);
    EXPECT_EQ(m[0].mu, (std::vector<double>{2, 3}));
    EXPECT_EQ(m[0].mu, m[1].mu);
}

TEST(DeviceMeans, MixedDevicesRejected) {
    TraceSet s(1, LabelKind::KeyByte);
    s.push_back(with_intermediate(0, {1}, 1));
    s.push_back(with_intermediate(0, {1}, 2));
    PoiPair p;
    p.indices = {0};
    EXPECT_THROW(device_means(std::span(&s, 1), p), ValidationError);
}

TEST(DeviceMeans, DispersionGrowsWithBitWeightSpread) {
    // Centered leakage averages to zero over balanced classes, so bit weights
    // only move the device means when the leak is uncentered.
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::vector<double> disp;
        for (double sw : {0.0, 0.1, 0.2}) {
            auto c = small_config();
            c.seed = seed;
            c.leak_centered = false;
            c.bit_weight_sigma = sw;
            c.gain_sigma = c.offset_sigma = c.poi_jitter_sigma = c.coupling_sigma = 0;
            c.noise_sigma = 0;
            const auto sets = device_sets(c, 20, 256);
            PoiPair p;
            p.indices = {c.resolved_poi_positions()[2], c.resolved_poi_positions()[3]};
            const auto m = device_means(sets, p);
            std::vector<std::uint32_t> all;
            for (const auto& d : m)
                all.push_back(d.device_id);
            disp.push_back(centroid_dispersion(m, all));
        }
        EXPECT_LT(disp[0], disp[1]) << seed;
        EXPECT_LT(disp[1], disp[2]) << seed;
    }
}

TEST(Select, SingleDeviceNeedsNoDistance) {
    const auto r = select_devices(line_map(), 1, SelectionMode::Dissimilar);
    EXPECT_EQ(r.devices, (std::vector<std::uint32_t>{1}));
    EXPECT_TRUE(r.distances.empty());
}

TEST(Select, HandTracedDissimilar) {
    const auto r = select_devices(line_map(), 3, SelectionMode::Dissimilar);
    EXPECT_EQ(r.devices, (std::vector<std::uint32_t>{1, 5, 2}));
    EXPECT_EQ(r.distances, (std::vector<double>{10, 4}));
}

TEST(Select, HandTracedSimilar) {
    const auto r = select_devices(line_map(), 3, SelectionMode::Similar);
    EXPECT_EQ(r.devices, (std::vector<std::uint32_t>{1, 2, 3}));
    EXPECT_EQ(r.distances, (std::vector<double>{1, 1.5}));
}

TEST(Select, TiesGoToLowestId) {
    DeviceMeanMap m{{7, {1}}, {3, {0}}, {5, {-1}}};
    // From device 3 both others are at distance 1.
    EXPECT_EQ(select_devices(m, 2, SelectionMode::Dissimilar).devices, (std::vector<std::uint32_t>{3, 5}));
    EXPECT_EQ(select_devices(m, 2, SelectionMode::Similar).devices, (std::vector<std::uint32_t>{3, 5}));
}

TEST(Select, ExplicitStartDevice) {
    const auto r = select_devices(line_map(), 2, SelectionMode::Dissimilar, 0, 5u);
    EXPECT_EQ(r.devices, (std::vector<std::uint32_t>{5, 1}));
    EXPECT_THROW(select_devices(line_map(), 2, SelectionMode::Dissimilar, 0, 9u), ValidationError);
}

TEST(Select, RandomIsSeededAndDistinct) {
    const auto a = select_devices(line_map(), 4, SelectionMode::Random, 3);
    const auto b = select_devices(line_map(), 4, SelectionMode::Random, 3);
    EXPECT_EQ(a.devices, b.devices);
    auto sorted = a.devices;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(std::unique(sorted.begin(), sorted.end()), sorted.end());
}

TEST(Select, TooManyDevicesRejected) {
    try {
        select_devices(line_map(), 6, SelectionMode::Dissimilar);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.key(), "select.n_devices");
    }
}

TEST(Select, GreedyDissimilarNearBruteForceOptimum) {
    const auto c = small_config();
    const auto sets = device_sets(c, 8, 512);
    TraceSet pooled = concat(sets);
    const auto m = device_means(sets, find_pois(pooled));
    const auto greedy = select_devices(m, 3, SelectionMode::Dissimilar);
    double best = 0;
    std::size_t subsets = 0;
    for (std::uint32_t a = 0; a < 8; ++a)
        for (std::uint32_t b = a + 1; b < 8; ++b)
            for (std::uint32_t d = b + 1; d < 8; ++d) {
                const std::vector<std::uint32_t> s{a, b, d};
                best = std::max(best, centroid_dispersion(m, s));
                ++subsets;
            }
    EXPECT_EQ(subsets, 56u);
    EXPECT_GE(centroid_dispersion(m, greedy.devices), 0.8 * best);
}

TEST(Select, ModeNames) {
    for (auto m : {SelectionMode::Dissimilar, SelectionMode::Similar, SelectionMode::Random})
        EXPECT_EQ(selection_mode_from_string(to_string(m)), m);
    EXPECT_THROW(selection_mode_from_string("closest"), ValidationError);
}
