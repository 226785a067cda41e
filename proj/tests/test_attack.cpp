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

#include <xdsca/attack.hpp>
#include <xdsca/pipeline.hpp>
#include <xdsca/synth.hpp>

#include <gtest/gtest.h>

using namespace xdsca;

TEST(RecoverKey, CountsAndRatio) {
    const std::vector<std::uint8_t> g{5, 5, 5, 7};
    const auto r = recover_key(g);
    EXPECT_EQ(r.key, 5);
    EXPECT_DOUBLE_EQ(r.ratio, 3.0);
    EXPECT_EQ(r.verdict, Verdict::Confident);
    EXPECT_EQ(r.histogram.size(), 2u);
    EXPECT_EQ(r.histogram[0], (std::pair<std::uint8_t, std::size_t>{5, 3}));
}

TEST(RecoverKey, AllDistinctIsInconclusive) {
    const std::vector<std::uint8_t> g{1, 2, 3, 4, 5, 6};
    const auto r = recover_key(g);
    EXPECT_DOUBLE_EQ(r.ratio, 1.0);
    EXPECT_EQ(r.verdict, Verdict::Inconclusive);
    EXPECT_EQ(r.key, 1); // lowest value among tied modes
    EXPECT_EQ(r.histogram.size(), 5u);
}

TEST(RecoverKey, SingleQueryAndBudgetLimit) {
    const std::vector<std::uint8_t> one{9};
    const auto r = recover_key(one);
    EXPECT_TRUE(std::isinf(r.ratio));
    EXPECT_EQ(r.verdict, Verdict::Inconclusive);
    const std::vector<std::uint8_t> g{4, 4, 4, 4};
    EXPECT_EQ(recover_key(g, 2.0, 3).verdict, Verdict::Inconclusive);
    EXPECT_EQ(recover_key(g, 2.0, 4).verdict, Verdict::Confident);
    EXPECT_THROW(recover_key(std::vector<std::uint8_t>{}), ValidationError);
}

TEST(RecoverKey, ReportJson) {
    const std::vector<std::uint8_t> g{5, 5};
    const auto j = recover_key(g, 2.0, 20, GridLocation{1, 2}).to_json();
    EXPECT_EQ(j["key"], 5);
    EXPECT_EQ(j["ratio"], "inf");
    EXPECT_EQ(j["location"]["col"], 2);
    EXPECT_EQ(j["verdict"], "confident");
}

TEST(AttackBudget, StableSuffix) {
    // Prefix ratios from 2 queries on: inf, 2, 1, 1.5, 2, 2.5, 3.
    const std::vector<std::uint8_t> g{3, 3, 8, 8, 3, 3, 3, 3};
    EXPECT_EQ(attack_budget(g, 2.0), std::optional<std::size_t>(6));
    const std::vector<std::uint8_t> distinct{1, 2, 3, 4};
    EXPECT_FALSE(attack_budget(distinct, 2.0).has_value());
}

TEST(AttackBudget, NonIncreasingAsThresholdDrops) {
    Rng rng = make_rng(4, {1});
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::uint8_t> g(30);
        for (auto& v : g)
            v = std::uniform_int_distribution<int>(0, 99)(rng) < 60 ? 42 : std::uint8_t(rng() & 7);
        std::optional<std::size_t> prev;
        for (double r : {4.0, 3.0, 2.0, 1.5, 1.0}) {
            const auto b = attack_budget(g, r);
            if (prev) {
                ASSERT_TRUE(b.has_value() && *b <= *prev);
            }
            prev = b ? b : prev;
        }
    }
}

TEST(KeyGuesses, InvertsSboxLabels) {
    TraceSet s(1, LabelKind::SboxOutput);
    Trace t;
    t.samples = {0};
    t.plaintext = 0x11;
    t.key = 0x2b;
    s.push_back(t);
    const std::vector<std::uint8_t> pred{intermediate(0x11, 0x2b)};
    EXPECT_EQ(key_guesses(pred, s, LabelKind::SboxOutput)[0], 0x2b);
    EXPECT_EQ(key_guesses(pred, s, LabelKind::KeyByte)[0], pred[0]);
}

TEST(Quadrants, RowMajorHalves) {
    EXPECT_EQ(quadrant_of({0, 0}, 10), 0);
    EXPECT_EQ(quadrant_of({1, 7}, 10), 1);
    EXPECT_EQ(quadrant_of({5, 4}, 10), 2);
    EXPECT_EQ(quadrant_of({9, 9}, 10), 3);
    EXPECT_EQ(quadrant_of({2, 2}, 5), 0);
    EXPECT_EQ(quadrant_of({3, 2}, 5), 2);
}

namespace {

// A small trained pipeline on a 6x6 grid with short traces.
struct SmallWorld {
    GeneratorConfig gen;
    TrainedPipeline pipe;
    std::vector<TraceSet> cell_sets;
    std::vector<GridLocation> locs;

    SmallWorld() {
        gen.trace_length = 300;
        gen.trigger_position = 10;
        gen.grid_size = 6;
        gen.hotspot = {1, 1};
        gen.spatial_scale = 0.7;
        gen.noise_sigma = snr_calibrate(gen, 3.1).noise_sigma;
        CampaignSpec s;
        s.n_devices = 4;
        s.traces_per_device = 2048 * 20;
        s.location = gen.hotspot;
        std::vector<TraceSet> train;
        for (std::uint32_t d = 0; d < 4; ++d)
            train.push_back(gen_device_traces(gen, gen_device(gen, d), s, 20));
        MlpConfig mlp;
        mlp.hidden = {64, 128, 128};
        mlp.dropout = {0.2, 0.1, 0.1};
        TrainConfig tc;
        tc.max_epochs = 25;
        tc.seed = 1;
        pipe = fit_pipeline(concat(train), {TransformKind::Lda, 20, 10}, mlp, tc);

        CampaignSpec v = s;
        v.traces_per_device = 40 * 20;
        v.key_mode = KeyMode::fixed(0x2b);
        const auto victim = gen_device(gen, 50);
        for (std::uint8_t r = 0; r < gen.grid_size; ++r)
            for (std::uint8_t c = 0; c < gen.grid_size; ++c) {
                v.location = {r, c};
                cell_sets.push_back(gen_device_traces(gen, victim, v, 20));
                locs.push_back({r, c});
            }
    }

    std::vector<CellTraces> cells() const {
        std::vector<CellTraces> out;
        for (std::size_t i = 0; i < locs.size(); ++i)
            out.push_back({locs[i], &cell_sets[i]});
        return out;
    }

    static SmallWorld& get() {
        static SmallWorld w;
        return w;
    }
};

} // namespace

TEST(Predict, IdenticalTracesAndRepeatedCalls) {
    auto& w = SmallWorld::get();
    TraceSet same(w.gen.trace_length, LabelKind::KeyByte);
    for (int i = 0; i < 20; ++i)
        same.push_back(w.cell_sets[6][0]);
    const auto p = predict_batch(w.pipe.model, w.pipe.transform, same);
    EXPECT_EQ(std::count(p.begin(), p.end(), p[0]), 20);
    EXPECT_EQ(predict_batch(w.pipe.model, w.pipe.transform, w.cell_sets[6]),
              predict_batch(w.pipe.model, w.pipe.transform, w.cell_sets[6]));
}

TEST(Predict, RejectsWrongAveragingAndTransform) {
    auto& w = SmallWorld::get();
    auto raw = w.cell_sets[0];
    TraceSet one(raw.trace_length(), raw.label_kind());
    Trace t = raw[0];
    t.n_averaged = 1;
    one.push_back(t);
    EXPECT_THROW(predict_batch(w.pipe.model, w.pipe.transform, one), ValidationError);
    auto other = w.pipe.model;
    other.transform_fingerprint ^= 1;
    try {
        predict_batch(other, w.pipe.transform, raw);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.key(), "model");
    }
}

TEST(ScanAttack, BestCellIsHotspotAndKeyRecovered) {
    auto& w = SmallWorld::get();
    const auto cells = w.cells();
    const auto res = scan_attack(w.pipe.model, w.pipe.transform, w.gen.grid_size, cells);
    ASSERT_TRUE(res.best_cell.has_value());
    EXPECT_EQ(*res.best_cell, w.gen.hotspot);
    EXPECT_EQ(res.report.key, 0x2b);
    EXPECT_EQ(res.report.verdict, Verdict::Confident);
    EXPECT_TRUE(res.accuracy.complete);
    EXPECT_EQ(res.accuracy.extreme(true), std::optional<GridLocation>(w.gen.hotspot));
    EXPECT_EQ(res.queries, 36u * 20);
}

TEST(ScanAttack, BlindModeLeavesAccuracyEmpty) {
    auto& w = SmallWorld::get();
    const auto cells = w.cells();
    ScanOptions opt;
    opt.blind = true;
    const auto res = scan_attack(w.pipe.model, w.pipe.transform, w.gen.grid_size, cells, opt);
    EXPECT_FALSE(res.accuracy.complete);
    EXPECT_TRUE(std::isnan(res.accuracy.values[0]));
    EXPECT_EQ(res.report.key, 0x2b);
}

TEST(ScanAttack, QuadrantScanUsesQuarterOfQueries) {
    auto& w = SmallWorld::get();
    const auto cells = w.cells();
    const auto full = scan_attack(w.pipe.model, w.pipe.transform, w.gen.grid_size, cells);
    const auto q = cells_in_quadrant(cells, w.gen.grid_size, quadrant_of(w.gen.hotspot, w.gen.grid_size));
    const auto part = scan_attack(w.pipe.model, w.pipe.transform, w.gen.grid_size, q);
    EXPECT_EQ(part.report.key, full.report.key);
    EXPECT_LE(double(part.queries), 0.25 * double(full.queries));
}

TEST(ScanAttack, HotspotBudgetAndConfidenceContrast) {
    auto& w = SmallWorld::get();
    const auto& hot = w.cell_sets[std::size_t(w.gen.hotspot.row) * w.gen.grid_size + w.gen.hotspot.col];
    const auto& far = w.cell_sets.back();
    const auto b = attack_budget(w.pipe.model, w.pipe.transform, hot);
    ASSERT_TRUE(b.has_value());
    EXPECT_LE(*b, 20u);
    auto ratio = [&](const TraceSet& s) {
        const auto g = key_guesses(predict_batch(w.pipe.model, w.pipe.transform, s.head(20)), s.head(20),
                                   w.pipe.model.label_kind);
        return recover_key(g).ratio;
    };
    EXPECT_GE(ratio(hot), 3.0 * ratio(far));
}
