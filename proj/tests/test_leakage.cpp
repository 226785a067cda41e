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

#include <xdsca/leakage.hpp>
#include <xdsca/synth.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace xdsca;

namespace {

GeneratorConfig short_config(std::size_t L = 200) {
    GeneratorConfig c;
    c.trace_length = L;
    c.n_pois = 4;
    c.n_input_pois = 1;
    c.trigger_position = 5;
    c.grid_size = 5;
    c.hotspot = {1, 2};
    return c;
}

TraceSet fixed_key_set(const GeneratorConfig& c, std::uint32_t dev, GridLocation loc, std::size_t n,
                       std::uint8_t key = 0x3c) {
    CampaignSpec s;
    s.traces_per_device = n;
    s.repeats_per_input = 1;
    s.key_mode = KeyMode::fixed(key);
    s.fixed_plaintext.reset();
    s.location = loc;
    s.label_kind = LabelKind::SboxOutput;
    return gen_device_traces(c, gen_device(c, dev), s);
}

TraceSet one_sample(std::initializer_list<float> v) {
    TraceSet s(1, LabelKind::KeyByte);
    for (float x : v) {
        Trace t;
        t.samples = {x};
        s.push_back(t);
    }
    return s;
}

} // namespace

TEST(Snr, HandComputedTwoClasses) {
    // Class means 1 and 3 (signal variance 1), within-class variance 1.
    TraceSet s(1, LabelKind::SboxOutput);
    for (auto [v, x] : {std::pair{0x00, 0.f}, {0x00, 2.f}, {0x01, 2.f}, {0x01, 4.f}}) {
        Trace t;
        t.plaintext = inv_sbox(std::uint8_t(v));
        t.samples = {x};
        s.push_back(t);
    }
    const auto e = snr(s, SnrClass::Byte);
    EXPECT_DOUBLE_EQ(e.signal[0], 1.0);
    EXPECT_DOUBLE_EQ(e.noise[0], 1.0);
    EXPECT_NEAR(e.snr_db, 0.0, 1e-12);
}

TEST(Snr, NoiselessIsInfinite) {
    auto c = short_config();
    c.noise_sigma = 0;
    const auto e = snr(fixed_key_set(c, 0, c.hotspot, 512), SnrClass::Byte);
    EXPECT_TRUE(std::isinf(e.snr_db));
}

TEST(Snr, RequiresRepeatedClasses) {
    auto c = short_config();
    EXPECT_THROW(snr(fixed_key_set(c, 0, c.hotspot, 256), SnrClass::Byte), ValidationError);
}

TEST(Snr, StatsMergeEqualsPooledSet) {
    auto c = short_config();
    const auto a = fixed_key_set(c, 0, c.hotspot, 512);
    const auto b = fixed_key_set(c, 1, c.hotspot, 512);
    auto sa = ClassStats::of(a);
    sa += ClassStats::of(b);
    const std::vector<TraceSet> both{a, b};
    const auto direct = snr(concat(both), SnrClass::Byte);
    const auto merged = snr(sa, SnrClass::Byte);
    EXPECT_EQ(direct.top_poi, merged.top_poi);
    EXPECT_NEAR(direct.snr_db, merged.snr_db, 1e-9);
}

TEST(Snr, PoolingDevicesLowersSnr) {
    GeneratorConfig c;
    std::vector<ClassStats> stats;
    for (std::uint32_t d = 0; d < 7; ++d)
        stats.push_back(ClassStats::of(fixed_key_set(c, d, c.hotspot, 256 * 16)));
    const auto curve = pooled_snr_curve(stats, 7, SnrClass::Byte, 16, 1);
    ASSERT_EQ(curve.size(), 7u);
    EXPECT_LT(curve[6], curve[0]);
}

TEST(Tvla, HandWelchOracle) {
    const auto r = tvla(one_sample({0, 0, 1, 1}), one_sample({10, 10, 11, 11}));
    // Means 0.5 and 10.5, both sample variances 1/3, four traces per group.
    const double expect = -10.0 / std::sqrt(1.0 / 3.0 / 4.0 * 2.0);
    EXPECT_NEAR(r.t[0], expect, 1e-9);
    EXPECT_TRUE(r.leaks);
}

TEST(Tvla, ZeroVarianceGivesZeroT) {
    const auto r = tvla(one_sample({2, 2}), one_sample({2, 2}));
    EXPECT_EQ(r.t[0], 0.0);
    EXPECT_FALSE(r.leaks);
}

TEST(Tvla, NullFalsePositiveRateMatchesSampleCount) {
    // Both groups from the same distribution. The family-wise rate over L
    // independent samples is 1 - (1 - p)^L with p = P(|z| > 4.5).
    auto c = short_config(300);
    c.leak_scale = 0;
    const auto dev = gen_device(c, 0);
    const int runs = 100;
    int clean = 0;
    for (int s = 0; s < runs; ++s) {
        const auto [f, r] = gen_tvla_sets(c, dev, c.hotspot, 2000, 0, 0, std::uint64_t(s));
        clean += !tvla(f, r).leaks;
    }
    const double p = std::erfc(4.5 / std::sqrt(2.0));
    const double expect = std::pow(1.0 - p, 300.0);
    EXPECT_GT(expect, 0.99);
    EXPECT_GE(clean, 99);
}

TEST(Tvla, HotspotLeaksMoreThanFarCorner) {
    auto c = short_config();
    const auto dev = gen_device(c, 0);
    const auto [hf, hr] = gen_tvla_sets(c, dev, c.hotspot, 2000, 0, 0x3c);
    const auto [ff, fr] = gen_tvla_sets(c, dev, {4, 4}, 2000, 0, 0x3c);
    const auto hot = tvla(hf, hr), far = tvla(ff, fr);
    EXPECT_GT(hot.max_abs_t, kTvlaThreshold);
    EXPECT_LT(far.max_abs_t, hot.max_abs_t);
}

TEST(Cema, PearsonPerfectLine) {
    const std::vector<double> x{1, 2, 3, 4}, y{2, 4, 6, 8};
    EXPECT_NEAR(pearson(x, y), 1.0, 1e-12);
}

TEST(Cema, NoiselessRecoversKeyQuickly) {
    auto c = short_config();
    c.noise_sigma = 0;
    const auto set = fixed_key_set(c, 0, c.hotspot, 256);
    const std::vector<std::size_t> sched{10, 20, 50};
    const auto r = cema(set, sched);
    EXPECT_EQ(r.best_guess, 0x3c);
    ASSERT_TRUE(r.mtd.has_value());
    EXPECT_LE(*r.mtd, 50u);
}

TEST(Cema, MtdGrowsAwayFromHotspot) {
    GeneratorConfig c;
    c.trace_length = 400;
    c.n_pois = 6;
    c.n_input_pois = 1;
    c.trigger_position = 5;
    const auto near = cema(fixed_key_set(c, 0, c.hotspot, 2048));
    const auto far = cema(fixed_key_set(c, 0, {4, 2}, 2048));
    ASSERT_TRUE(near.mtd.has_value());
    EXPECT_LT(near.mtd_or_inf(), far.mtd_or_inf());
}

TEST(Cema, RejectsMixedKeysAndShortSets) {
    auto c = short_config();
    CampaignSpec s;
    s.traces_per_device = 64;
    s.repeats_per_input = 1;
    EXPECT_THROW(cema(gen_device_traces(c, gen_device(c, 0), s)), ValidationError);
    const std::vector<std::size_t> sched{500};
    EXPECT_THROW(cema(fixed_key_set(c, 0, c.hotspot, 64), sched), ValidationError);
}

TEST(Heatmap, NoLeakFieldStaysBelowThreshold) {
    auto c = short_config(100);
    c.grid_size = 3;
    c.hotspot = {1, 1};
    c.leak_scale = 0;
    std::vector<std::pair<TraceSet, TraceSet>> groups;
    std::vector<CellTraces> cells;
    for (std::uint8_t r = 0; r < 3; ++r)
        for (std::uint8_t col = 0; col < 3; ++col)
            groups.push_back(gen_tvla_sets(c, gen_device(c, 0), {r, col}, 2000, 0, 0));
    std::size_t i = 0;
    for (std::uint8_t r = 0; r < 3; ++r)
        for (std::uint8_t col = 0; col < 3; ++col)
            cells.push_back({{r, col}, &groups[i++].first});
    i = 0;
    const auto h = heatmap_scan(3, MetricKind::TMax, cells, [&](const TraceSet&) {
        const auto& g = groups[i++];
        return tvla(g.first, g.second).max_abs_t;
    });
    EXPECT_TRUE(h.complete);
    EXPECT_EQ(h.to_json()["cells_above_threshold"], 0);
}

TEST(Heatmap, TMaxPeaksAtHotspot) {
    auto c = short_config();
    std::vector<std::pair<TraceSet, TraceSet>> groups;
    std::vector<GridLocation> locs;
    const auto dev = gen_device(c, 0);
    for (std::uint8_t r = 0; r < c.grid_size; ++r)
        for (std::uint8_t col = 0; col < c.grid_size; ++col) {
            groups.push_back(gen_tvla_sets(c, dev, {r, col}, 1000, 0, 0x3c));
            locs.push_back({r, col});
        }
    std::vector<CellTraces> cells;
    for (std::size_t i = 0; i < locs.size(); ++i)
        cells.push_back({locs[i], &groups[i].first});
    std::size_t i = 0;
    const auto h = heatmap_scan(c.grid_size, MetricKind::TMax, cells, [&](const TraceSet&) {
        const auto& g = groups[i++];
        return tvla(g.first, g.second).max_abs_t;
    });
    EXPECT_EQ(h.extreme(true), std::optional<GridLocation>(c.hotspot));
}

TEST(Heatmap, MissingCellsAndExports) {
    TraceSet dummy = one_sample({1});
    const std::vector<CellTraces> cells{{{0, 1}, &dummy}};
    auto h = heatmap_scan(2, MetricKind::Mtd, cells, [](const TraceSet&) { return kInf; });
    EXPECT_FALSE(h.complete);
    EXPECT_EQ(h.to_csv(), "nan,inf\nnan,nan\n");
    const auto pgm = h.to_pgm();
    EXPECT_EQ(pgm.substr(0, 11), "P5\n2 2\n255\n");
    EXPECT_EQ(static_cast<unsigned char>(pgm[12]), 255);
    EXPECT_EQ(h.to_json()["values"][1], "inf");
}

TEST(Ranks, TiesShareAverageRank) {
    const std::vector<double> v{3, 1, 3, 2};
    EXPECT_EQ(average_ranks(v), (std::vector<double>{3.5, 1, 3.5, 2}));
}

TEST(Ranks, SpearmanSkipsMissingAndHandlesInfinity) {
    const std::vector<double> a{1, 2, kNaN, 4, 5};
    const std::vector<double> b{50, 40, 0, 30, kInf};
    EXPECT_NEAR(spearman(a, b), 0.2, 1e-12); // ranks (1,2,3,4) vs (3,2,1,4)
    const std::vector<double> c{10, 20, 30, 40, 50};
    const std::vector<double> d{9, 7, 5, 3, 1};
    EXPECT_NEAR(spearman(c, d), -1.0, 1e-12);
}
