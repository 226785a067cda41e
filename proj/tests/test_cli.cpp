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

#include <xdsca/io.hpp>

#include <nlohmann/json.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <string>

#include <sys/wait.h>

using namespace xdsca;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "xdsca_test_cli";

int run(const std::string& args) {
    const std::string cmd = std::string(XDSCA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string write_config(const std::string& name, const json& j) {
    const auto p = kRoot / name;
    write_file_atomic(p, j.dump());
    return p.string();
}

json small_config() {
    return {{"seed", 5},
            {"generator", {{"trace_length", 300}, {"trigger_position", 10}}},
            {"campaign", {{"n_devices", 2}, {"traces_per_device", 1280}}},
            {"transform", {{"kind", "pca"}, {"n_components", 8}}},
            {"model", {{"hidden", {16}}, {"dropout", {0.1}}}},
            {"train", {{"max_epochs", 2}}}};
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        fs::remove_all(kRoot);
        fs::create_directories(kRoot);
        config = write_config("small.json", small_config());
        ASSERT_EQ(run("--config " + config + " --out " + (kRoot / "gen").string() + " gen"), 0);
    }
    static void TearDownTestSuite() { fs::remove_all(kRoot); }

    static std::string out(const std::string& name) { return (kRoot / name).string(); }
    static std::string traces() { return out("gen") + "/traces.emt"; }

    static inline std::string config;
};

} // namespace

TEST_F(Cli, GenIsByteIdentical) {
    ASSERT_EQ(run("--config " + config + " --out " + out("gen2") + " gen"), 0);
    EXPECT_EQ(read_file(traces()), read_file(out("gen2") + "/traces.emt"));
    const auto set = read_traces(traces());
    EXPECT_EQ(set.size(), 2u * 1280u);
    EXPECT_EQ(set.trace_length(), 300u);
}

TEST_F(Cli, WritesResolvedConfigAndSummary) {
    const auto dir = fs::path(out("gen"));
    ASSERT_TRUE(fs::exists(dir / "resolved_config.json"));
    const auto resolved = json::parse(read_file(dir / "resolved_config.json"));
    EXPECT_EQ(resolved["seed"], 5);
    EXPECT_EQ(resolved["generator"]["trace_length"], 300);
    const auto summary = json::parse(read_file(dir / "summary.json"));
    EXPECT_EQ(summary["command"], "gen");
    EXPECT_EQ(summary["status"], "ok");
    EXPECT_EQ(summary["result"]["traces"], 2560);
}

TEST_F(Cli, SeedFlagOverridesConfig) {
    ASSERT_EQ(run("--config " + config + " --seed 6 --out " + out("gen6") + " gen"), 0);
    EXPECT_NE(read_file(traces()), read_file(out("gen6") + "/traces.emt"));
}

TEST_F(Cli, UnknownConfigKeyExitsTwo) {
    auto j = small_config();
    j["train"]["momentum"] = 0.9;
    const auto bad = write_config("bad.json", j);
    EXPECT_EQ(run("--config " + bad + " --out " + out("bad") + " gen"), 2);
    const auto summary = json::parse(read_file(out("bad") + "/summary.json"));
    EXPECT_EQ(summary["status"], "error");
}

TEST_F(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run("--out " + out("u") + " frobnicate"), 2);
    EXPECT_EQ(run("--out " + out("u") + " train"), 2);
    EXPECT_EQ(run("--out " + out("u") + " snr -i " + out("missing.emt")), 2);
}

TEST_F(Cli, TrainRejectsMismatchedInitModel) {
    ASSERT_EQ(run("--config " + config + " --out " + out("train") + " train -i " + traces()), 0);
    EXPECT_TRUE(fs::exists(out("train") + "/model.xmlp"));
    EXPECT_TRUE(fs::exists(out("train") + "/transform.xft"));

    auto j = small_config();
    j["transform"] = {{"kind", "fft"}};
    const auto fft = write_config("fft.json", j);
    ASSERT_EQ(run("--config " + fft + " --out " + out("fft") + " preprocess -i " + traces()), 0);
    EXPECT_EQ(run("--config " + fft + " --out " + out("resume") + " train -i " + traces() + " --transform " +
                  out("fft") + "/transform.xft --init-model " + out("train") + "/model.xmlp"),
              2);
    EXPECT_EQ(run("--config " + config + " --out " + out("resume2") + " train -i " + traces() + " --transform " +
                  out("train") + "/transform.xft --init-model " + out("train") + "/model.xmlp"),
              0);
}

TEST_F(Cli, AcceptsCsvInput) {
    const auto set = read_traces(traces()).head(512);
    write_traces(kRoot / "part.csv", set);
    ASSERT_EQ(run("--config " + config + " --out " + out("snr") + " snr -i " + out("part.csv")), 0);
    const auto j = json::parse(read_file(out("snr") + "/snr.json"));
    EXPECT_EQ(j["devices"].size(), 1u);
    ASSERT_EQ(run("--config " + config + " --out " + out("pre") + " preprocess -i " + out("part.csv")), 0);
    EXPECT_TRUE(fs::exists(out("pre") + "/transform.xft"));
    // CEMA needs a single key; the campaign sweeps keys.
    EXPECT_EQ(run("--config " + config + " --out " + out("cema") + " cema -i " + out("part.csv")), 2);
}

TEST_F(Cli, ReportCollectsRuns) {
    const auto config = write_config("report.json", small_config());
    ASSERT_EQ(run("--config " + config + " --out " + out("rep_a") + " gen"), 0);
    ASSERT_EQ(run("--config " + config + " --seed 6 --out " + out("rep_b") + " gen"), 0);
    ASSERT_EQ(run("--out " + out("report") + " report --run " + out("rep_a") + " --run " + out("rep_b")), 0);
    const auto j = json::parse(read_file(out("report") + "/report.json"));
    EXPECT_EQ(j["runs"].size(), 2u);
}
