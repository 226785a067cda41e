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

// Run configuration: every tunable of the pipeline in one JSON document.
// Unknown keys are rejected; to_json emits the fully resolved form, which
// parses back to an identical configuration.

#include <xdsca/attack.hpp>
#include <xdsca/devselect.hpp>
#include <xdsca/error.hpp>
#include <xdsca/leakage.hpp>
#include <xdsca/mlp.hpp>
#include <xdsca/preprocess.hpp>
#include <xdsca/synth.hpp>

#include <nlohmann/json.hpp>

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace xdsca {

using nlohmann::json;

struct LeakageConfig {
    SnrClass snr_class = SnrClass::Byte;
    std::size_t tvla_traces_per_group = 2000;
    std::uint8_t tvla_fixed_plaintext = 0;
    std::uint8_t tvla_key = 0;
    std::size_t cema_traces = 2000;
    std::vector<std::size_t> cema_schedule = default_cema_schedule();
    std::size_t pooled_max_devices = 7;
};

struct SelectConfig {
    std::size_t n_devices = 10;
    SelectionMode mode = SelectionMode::Dissimilar;
    std::size_t n_pois = 2;
    std::size_t min_separation = 5;
    std::optional<std::uint32_t> first_device;
};

struct AttackConfig {
    double r_min = kDefaultRatioMin;
    std::size_t queries = 20;
    bool blind = false;
    std::optional<int> quadrant; // restrict scans to one quadrant 0..3
    std::uint32_t device_id = 100;  // victim device for generated scans
    std::size_t traces_per_cell = 20;
};

struct RunConfig {
    std::uint64_t seed = 1;
    unsigned threads = 1;
    GeneratorConfig generator;
    std::optional<double> target_snr_db; // when set, noise_sigma is calibrated
    CampaignSpec campaign;
    std::size_t campaign_averaging = 1; // averaging applied while generating
    bool scan_grid = false;             // generate every grid cell instead of campaign.location
    TransformSpec transform;
    MlpConfig model;
    TrainConfig train;
    double val_fraction = 0.1;
    SelectConfig select;
    LeakageConfig leakage;
    AttackConfig attack;

    // Applies the global seed and any noise calibration.
    void resolve() {
        generator.seed = seed;
        train.seed = seed;
        if (target_snr_db)
            generator.noise_sigma = snr_calibrate(generator, *target_snr_db).noise_sigma;
        validate();
    }

    void validate() const {
        generator.validate();
        campaign.validate();
        train.validate();
        require(threads >= 1, "must be >= 1", "threads");
        require(campaign_averaging >= 1 && campaign.repeats_per_input % campaign_averaging == 0,
                "must divide campaign.repeats_per_input", "campaign.averaging_n");
        require(transform.averaging_n >= 1, "must be >= 1", "transform.averaging_n");
        require(transform.n_components >= 1, "must be >= 1", "transform.n_components");
        require(transform.lda_ridge >= 0, "must be >= 0", "transform.lda_ridge");
        require(val_fraction > 0 && val_fraction < 1, "must lie in (0, 1)", "train.val_fraction");
        require(select.n_devices >= 1, "must be >= 1", "select.n_devices");
        require(select.n_pois >= 1, "must be >= 1", "select.n_pois");
        require(leakage.tvla_traces_per_group >= 2, "must be >= 2", "leakage.tvla_traces_per_group");
        require(!leakage.cema_schedule.empty(), "must not be empty", "leakage.cema_schedule");
        require(leakage.pooled_max_devices >= 1, "must be >= 1", "leakage.pooled_max_devices");
        require(attack.r_min >= 1, "must be >= 1", "attack.r_min");
        require(attack.queries >= 1, "must be >= 1", "attack.queries");
        require(attack.traces_per_cell >= 1, "must be >= 1", "attack.traces_per_cell");
        require(!attack.quadrant || (*attack.quadrant >= 0 && *attack.quadrant <= 3), "must be 0..3",
                "attack.quadrant");
    }
};

namespace detail {

// Reads fields of one JSON object, remembering which keys were consumed.
class Section {
public:
    Section(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object())
            throw ValidationError("must be an object", prefix_.empty() ? "config" : prefix_);
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key))
            return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ValidationError(std::string("wrong type: ") + e.what(), path(key));
        }
    }

    template <typename T>
    void get_optional(const char* key, std::optional<T>& out) {
        seen_.insert(key);
        if (!j_.contains(key))
            return;
        if (j_.at(key).is_null()) {
            out.reset();
            return;
        }
        T v{};
        get(key, v);
        out = v;
    }

    template <typename Fn>
    void get_with(const char* key, Fn&& fn) {
        seen_.insert(key);
        if (!j_.contains(key))
            return;
        try {
            fn(j_.at(key));
        } catch (const json::exception& e) {
            throw ValidationError(std::string("wrong type: ") + e.what(), path(key));
        } catch (const ValidationError& e) {
            throw ValidationError(strip_key(e), path(key));
        }
    }

    Section sub(const char* key) {
        seen_.insert(key);
        static const json empty = json::object();
        return Section(j_.contains(key) ? j_.at(key) : empty, path(key));
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k))
                throw ValidationError("unknown configuration key", path(k));
    }

    std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

private:
    static std::string strip_key(const ValidationError& e) {
        std::string w = e.what();
        if (!e.key().empty() && w.rfind(e.key() + ": ", 0) == 0)
            w.erase(0, e.key().size() + 2);
        return w;
    }

    const json& j_;
    std::string prefix_;
    std::set<std::string> seen_;
};

inline GridLocation location_from_json(const json& j) {
    if (!j.is_object() || !j.contains("row") || !j.contains("col") || j.size() != 2)
        throw ValidationError("expected {\"row\": r, \"col\": c}");
    return {j.at("row").get<std::uint8_t>(), j.at("col").get<std::uint8_t>()};
}

inline json location_to_json(GridLocation l) { return {{"row", l.row}, {"col", l.col}}; }

inline std::string_view snr_class_name(SnrClass c) { return c == SnrClass::Byte ? "byte" : "hamming_weight"; }

inline std::string_view key_mode_name(KeyMode::Kind k) {
    switch (k) {
    case KeyMode::Kind::Fixed: return "fixed";
    case KeyMode::Kind::RandomPerDevice: return "random_per_device";
    case KeyMode::Kind::Sweep: return "sweep";
    }
    return "?";
}

} // namespace detail

inline RunConfig config_from_json(const json& j) {
    RunConfig c;
    detail::Section root(j, "");
    root.get("seed", c.seed);
    root.get("threads", c.threads);
    {
        auto s = root.sub("generator");
        auto& g = c.generator;
        s.get("trace_length", g.trace_length);
        s.get("n_pois", g.n_pois);
        s.get("n_input_pois", g.n_input_pois);
        s.get("poi_positions", g.poi_positions);
        s.get("bit_weight_sigma", g.bit_weight_sigma);
        s.get("gain_sigma", g.gain_sigma);
        s.get("offset_sigma", g.offset_sigma);
        s.get("poi_jitter_sigma", g.poi_jitter_sigma);
        s.get("coupling_sigma", g.coupling_sigma);
        s.get("activity_level", g.activity_level);
        s.get("trigger_amplitude", g.trigger_amplitude);
        s.get("trigger_position", g.trigger_position);
        s.get("pulse_width", g.pulse_width);
        s.get("bit_contrast", g.bit_contrast);
        s.get("leak_scale", g.leak_scale);
        s.get("leak_centered", g.leak_centered);
        s.get("noise_sigma", g.noise_sigma);
        s.get("interference_fraction", g.interference_fraction);
        s.get("interference_cycles", g.interference_cycles);
        s.get_optional("target_snr_db", c.target_snr_db);
        s.get_with("hotspot", [&](const json& v) { g.hotspot = detail::location_from_json(v); });
        s.get("spatial_scale", g.spatial_scale);
        s.get("grid_size", g.grid_size);
        s.finish();
    }
    {
        auto s = root.sub("campaign");
        auto& cp = c.campaign;
        s.get("n_devices", cp.n_devices);
        s.get("first_device_id", cp.first_device_id);
        s.get("traces_per_device", cp.traces_per_device);
        s.get("repeats_per_input", cp.repeats_per_input);
        std::string mode = std::string(detail::key_mode_name(cp.key_mode.kind));
        s.get("key_mode", mode);
        if (mode == "fixed")
            cp.key_mode.kind = KeyMode::Kind::Fixed;
        else if (mode == "random_per_device")
            cp.key_mode.kind = KeyMode::Kind::RandomPerDevice;
        else if (mode == "sweep")
            cp.key_mode.kind = KeyMode::Kind::Sweep;
        else
            throw ValidationError("expected fixed, random_per_device or sweep", "campaign.key_mode");
        s.get("key", cp.key_mode.key);
        s.get_optional("fixed_plaintext", cp.fixed_plaintext);
        s.get_with("label_kind", [&](const json& v) { cp.label_kind = label_kind_from_string(v.get<std::string>()); });
        s.get_with("location", [&](const json& v) { cp.location = detail::location_from_json(v); });
        s.get("averaging_n", c.campaign_averaging);
        s.get("scan_grid", c.scan_grid);
        s.finish();
    }
    {
        auto s = root.sub("transform");
        auto& t = c.transform;
        s.get_with("kind", [&](const json& v) { t.kind = transform_kind_from_string(v.get<std::string>()); });
        t.n_components = TransformSpec::default_components(t.kind);
        s.get("averaging_n", t.averaging_n);
        s.get("n_components", t.n_components);
        s.get("window_len", t.window_len);
        s.get("hop", t.hop);
        s.get("lda_ridge", t.lda_ridge);
        s.finish();
    }
    {
        auto s = root.sub("model");
        s.get("hidden", c.model.hidden);
        s.get("dropout", c.model.dropout);
        s.get("bn_momentum", c.model.bn_momentum);
        s.get("bn_eps", c.model.bn_eps);
        s.finish();
        require(c.model.hidden.size() == c.model.dropout.size(), "one dropout rate per hidden layer",
                "model.dropout");
    }
    {
        auto s = root.sub("train");
        auto& t = c.train;
        s.get("lr0", t.lr0);
        s.get("plateau_patience", t.plateau_patience);
        s.get("lr_factor", t.lr_factor);
        s.get("batch_size", t.batch_size);
        s.get("max_epochs", t.max_epochs);
        s.get("adam_beta1", t.beta1);
        s.get("adam_beta2", t.beta2);
        s.get("adam_eps", t.adam_eps);
        s.get("early_stop_patience", t.early_stop_patience);
        s.get("val_fraction", c.val_fraction);
        s.finish();
    }
    {
        auto s = root.sub("select");
        auto& t = c.select;
        s.get("n_devices", t.n_devices);
        s.get_with("mode", [&](const json& v) { t.mode = selection_mode_from_string(v.get<std::string>()); });
        s.get("n_pois", t.n_pois);
        s.get("min_separation", t.min_separation);
        s.get_optional("first_device", t.first_device);
        s.finish();
    }
    {
        auto s = root.sub("leakage");
        auto& t = c.leakage;
        s.get_with("snr_class", [&](const json& v) {
            const auto n = v.get<std::string>();
            if (n == "byte")
                t.snr_class = SnrClass::Byte;
            else if (n == "hamming_weight")
                t.snr_class = SnrClass::HammingWeight;
            else
                throw ValidationError("expected byte or hamming_weight");
        });
        s.get("tvla_traces_per_group", t.tvla_traces_per_group);
        s.get("tvla_fixed_plaintext", t.tvla_fixed_plaintext);
        s.get("tvla_key", t.tvla_key);
        s.get("cema_traces", t.cema_traces);
        s.get("cema_schedule", t.cema_schedule);
        s.get("pooled_max_devices", t.pooled_max_devices);
        s.finish();
    }
    {
        auto s = root.sub("attack");
        auto& t = c.attack;
        s.get("r_min", t.r_min);
        s.get("queries", t.queries);
        s.get("blind", t.blind);
        s.get_optional("quadrant", t.quadrant);
        s.get("device_id", t.device_id);
        s.get("traces_per_cell", t.traces_per_cell);
        s.finish();
    }
    root.finish();
    return c;
}

inline json config_to_json(const RunConfig& c) {
    const auto& g = c.generator;
    const auto& cp = c.campaign;
    json j;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["generator"] = {{"trace_length", g.trace_length},
                      {"n_pois", g.n_pois},
                      {"n_input_pois", g.n_input_pois},
                      {"poi_positions", g.poi_positions},
                      {"bit_weight_sigma", g.bit_weight_sigma},
                      {"gain_sigma", g.gain_sigma},
                      {"offset_sigma", g.offset_sigma},
                      {"poi_jitter_sigma", g.poi_jitter_sigma},
                      {"coupling_sigma", g.coupling_sigma},
                      {"activity_level", g.activity_level},
                      {"trigger_amplitude", g.trigger_amplitude},
                      {"trigger_position", g.trigger_position},
                      {"pulse_width", g.pulse_width},
                      {"bit_contrast", g.bit_contrast},
                      {"leak_scale", g.leak_scale},
                      {"leak_centered", g.leak_centered},
                      {"noise_sigma", g.noise_sigma},
                      {"interference_fraction", g.interference_fraction},
                      {"interference_cycles", g.interference_cycles},
                      {"target_snr_db", c.target_snr_db ? json(*c.target_snr_db) : json(nullptr)},
                      {"hotspot", detail::location_to_json(g.hotspot)},
                      {"spatial_scale", g.spatial_scale},
                      {"grid_size", g.grid_size}};
    j["campaign"] = {{"n_devices", cp.n_devices},
                     {"first_device_id", cp.first_device_id},
                     {"traces_per_device", cp.traces_per_device},
                     {"repeats_per_input", cp.repeats_per_input},
                     {"key_mode", detail::key_mode_name(cp.key_mode.kind)},
                     {"key", cp.key_mode.key},
                     {"fixed_plaintext", cp.fixed_plaintext ? json(*cp.fixed_plaintext) : json(nullptr)},
                     {"label_kind", to_string(cp.label_kind)},
                     {"location", detail::location_to_json(cp.location)},
                     {"averaging_n", c.campaign_averaging},
                     {"scan_grid", c.scan_grid}};
    j["transform"] = {{"kind", to_string(c.transform.kind)},
                      {"averaging_n", c.transform.averaging_n},
                      {"n_components", c.transform.n_components},
                      {"window_len", c.transform.window_len},
                      {"hop", c.transform.hop},
                      {"lda_ridge", c.transform.lda_ridge}};
    j["model"] = {{"hidden", c.model.hidden},
                  {"dropout", c.model.dropout},
                  {"bn_momentum", c.model.bn_momentum},
                  {"bn_eps", c.model.bn_eps}};
    j["train"] = {{"lr0", c.train.lr0},
                  {"plateau_patience", c.train.plateau_patience},
                  {"lr_factor", c.train.lr_factor},
                  {"batch_size", c.train.batch_size},
                  {"max_epochs", c.train.max_epochs},
                  {"adam_beta1", c.train.beta1},
                  {"adam_beta2", c.train.beta2},
                  {"adam_eps", c.train.adam_eps},
                  {"early_stop_patience", c.train.early_stop_patience},
                  {"val_fraction", c.val_fraction}};
    j["select"] = {{"n_devices", c.select.n_devices},
                   {"mode", to_string(c.select.mode)},
                   {"n_pois", c.select.n_pois},
                   {"min_separation", c.select.min_separation},
                   {"first_device", c.select.first_device ? json(*c.select.first_device) : json(nullptr)}};
    j["leakage"] = {{"snr_class", detail::snr_class_name(c.leakage.snr_class)},
                    {"tvla_traces_per_group", c.leakage.tvla_traces_per_group},
                    {"tvla_fixed_plaintext", c.leakage.tvla_fixed_plaintext},
                    {"tvla_key", c.leakage.tvla_key},
                    {"cema_traces", c.leakage.cema_traces},
                    {"cema_schedule", c.leakage.cema_schedule},
                    {"pooled_max_devices", c.leakage.pooled_max_devices}};
    j["attack"] = {{"r_min", c.attack.r_min},
                   {"queries", c.attack.queries},
                   {"blind", c.attack.blind},
                   {"quadrant", c.attack.quadrant ? json(*c.attack.quadrant) : json(nullptr)},
                   {"device_id", c.attack.device_id},
                   {"traces_per_cell", c.attack.traces_per_cell}};
    return j;
}

inline RunConfig load_config_text(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("not valid JSON: ") + e.what(), "config");
    }
    return config_from_json(j);
}

} // namespace xdsca
