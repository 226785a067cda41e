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

#include <xdsca/config.hpp>

#include <gtest/gtest.h>

using namespace xdsca;

namespace {

std::string key_of(const std::string& text) {
    try {
        load_config_text(text);
    } catch (const ValidationError& e) {
        return e.key();
    }
    return "<accepted>";
}

} // namespace

TEST(RunConfig, DefaultsRoundTrip) {
    const RunConfig c;
    const auto j = config_to_json(c);
    EXPECT_EQ(config_to_json(config_from_json(j)), j);
    EXPECT_EQ(j["transform"]["kind"], "lda");
    EXPECT_EQ(j["model"]["hidden"], json({100, 1024, 512}));
    EXPECT_EQ(j["train"]["lr0"], 0.005);
}

TEST(RunConfig, EditedValuesRoundTrip) {
    auto c = load_config_text(R"({"seed": 9, "generator": {"pulse_width": 5, "hotspot": {"row": 3, "col": 4}},
        "campaign": {"key_mode": "fixed", "key": 43, "fixed_plaintext": null, "label_kind": "sbox_output"},
        "transform": {"kind": "pca"}, "select": {"mode": "similar", "first_device": 4},
        "attack": {"quadrant": 2}})");
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.generator.pulse_width, 5u);
    EXPECT_EQ(c.generator.hotspot, (GridLocation{3, 4}));
    EXPECT_EQ(c.campaign.key_mode.kind, KeyMode::Kind::Fixed);
    EXPECT_FALSE(c.campaign.fixed_plaintext.has_value());
    EXPECT_EQ(c.transform.n_components, 250u);
    EXPECT_EQ(c.select.first_device, std::optional<std::uint32_t>(4));
    const auto j = config_to_json(c);
    EXPECT_EQ(config_to_json(config_from_json(j)), j);
}

TEST(RunConfig, UnknownKeysRejectedWithPath) {
    EXPECT_EQ(key_of(R"({"sed": 1})"), "sed");
    EXPECT_EQ(key_of(R"({"generator": {"noise": 1}})"), "generator.noise");
    EXPECT_EQ(key_of(R"({"train": {"lr0": 0.01, "momentum": 0.9}})"), "train.momentum");
}

TEST(RunConfig, BadValuesNameTheKey) {
    EXPECT_EQ(key_of(R"({"train": {"lr0": "fast"}})"), "train.lr0");
    EXPECT_EQ(key_of(R"({"transform": {"kind": "wavelet"}})"), "transform.kind");
    EXPECT_EQ(key_of(R"({"select": {"mode": "x"}})"), "select.mode");
    EXPECT_EQ(key_of(R"({"campaign": {"label_kind": "x"}})"), "campaign.label_kind");
    EXPECT_EQ(key_of(R"({"model": {"hidden": [10], "dropout": [0.1, 0.2]}})"), "model.dropout");
    EXPECT_EQ(key_of(R"({"generator": []})"), "generator");
    EXPECT_EQ(key_of("{not json"), "config");
}

TEST(RunConfig, ResolveAppliesSeedAndCalibration) {
    auto c = load_config_text(R"({"seed": 77, "generator": {"target_snr_db": 19.6}})");
    c.resolve();
    EXPECT_EQ(c.generator.seed, 77u);
    EXPECT_EQ(c.train.seed, 77u);
    EXPECT_NEAR(c.generator.noise_sigma, snr_calibrate(c.generator, 19.6).noise_sigma, 0);
    auto bad = load_config_text(R"({"generator": {"pulse_width": 2}})");
    try {
        bad.resolve();
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.key(), "generator.pulse_width");
    }
}
