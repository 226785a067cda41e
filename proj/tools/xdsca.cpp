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

// xdsca: command-line front end. One subcommand per pipeline stage; every run
// writes its outputs, resolved_config.json and summary.json into --out.

#include <xdsca/xdsca.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace xdsca;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out = "out";
};

struct Inputs {
    std::vector<std::string> traces;
    std::string transform;
    std::string model;
    std::string init_model;
    std::vector<std::string> runs;
    std::string fixed, random;
};

RunConfig load_run_config(const Globals& g) {
    RunConfig cfg;
    if (!g.config.empty())
        cfg = load_config_text(read_file(g.config));
    if (g.seed)
        cfg.seed = *g.seed;
    if (g.threads)
        cfg.threads = *g.threads;
    cfg.resolve();
    return cfg;
}

TraceSet load_inputs(const std::vector<std::string>& paths, LabelKind csv_kind) {
    require(!paths.empty(), "at least one --input is required", "input");
    std::vector<TraceSet> sets;
    for (const auto& p : paths)
        sets.push_back(read_traces(p, csv_kind));
    return concat(sets);
}

// Brings raw traces to the averaging factor a transform expects.
TraceSet to_averaging(const TraceSet& set, std::size_t n) {
    if (set.empty() || set[0].n_averaged == n)
        return set;
    require(set[0].n_averaged == 1, "traces are averaged " + std::to_string(set[0].n_averaged) +
                                        "x; expected raw traces or " + std::to_string(n) + "x",
            "transform.averaging_n");
    return average_traces(set, n).set;
}

json history_json(const TrainHistory& h) {
    return {{"epochs", h.epochs()},
            {"best_epoch", h.best_epoch},
            {"best_val_accuracy", h.best_val_accuracy},
            {"train_loss", h.train_loss},
            {"train_accuracy", h.train_accuracy},
            {"val_accuracy", h.val_accuracy},
            {"learning_rate", h.learning_rate}};
}

json location_json(GridLocation l) { return {{"row", l.row}, {"col", l.col}}; }

void write_heatmap(const fs::path& dir, const std::string& stem, const Heatmap& h) {
    write_file_atomic(dir / (stem + ".csv"), h.to_csv());
    write_file_atomic(dir / (stem + ".pgm"), h.to_pgm());
    write_json(dir / (stem + ".json"), h.to_json());
}

json cmd_gen(const RunConfig& cfg, const fs::path& out) {
    auto spec = cfg.campaign;
    std::vector<GridLocation> cells;
    if (cfg.scan_grid) {
        for (std::uint8_t r = 0; r < cfg.generator.grid_size; ++r)
            for (std::uint8_t c = 0; c < cfg.generator.grid_size; ++c)
                cells.push_back({r, c});
    } else {
        cells.push_back(spec.location);
    }
    TraceSet all(cfg.generator.trace_length, spec.label_kind);
    json devices = json::array();
    for (std::size_t d = 0; d < spec.n_devices; ++d) {
        const auto dev = gen_device(cfg.generator, spec.first_device_id + std::uint32_t(d));
        devices.push_back({{"device_id", dev.device_id}, {"coupling", dev.coupling}, {"gain", dev.gain}});
        for (auto loc : cells) {
            spec.location = loc;
            all.append(gen_device_traces(cfg.generator, dev, spec, cfg.campaign_averaging, cfg.threads));
        }
    }
    write_traces(out / "traces.emt", all);
    return {{"traces", all.size()},
            {"trace_length", all.trace_length()},
            {"n_averaged", cfg.campaign_averaging},
            {"cells", cells.size()},
            {"noise_sigma", cfg.generator.noise_sigma},
            {"devices", devices},
            {"output", "traces.emt"}};
}

json cmd_preprocess(const RunConfig& cfg, const Inputs& in, const fs::path& out) {
    const auto set = to_averaging(load_inputs(in.traces, cfg.campaign.label_kind), cfg.transform.averaging_n);
    const auto ft = FeatureTransform::fit(cfg.transform, set);
    write_file_atomic(out / "transform.xft", ft.serialize());
    return {{"kind", to_string(ft.spec().kind)},
            {"input_traces", set.size()},
            {"input_dim", ft.trace_length()},
            {"output_dim", ft.output_dim()},
            {"fingerprint", ft.fingerprint()},
            {"output", "transform.xft"}};
}

json cmd_train(const RunConfig& cfg, const Inputs& in, const fs::path& out) {
    const auto set = to_averaging(load_inputs(in.traces, cfg.campaign.label_kind), cfg.transform.averaging_n);
    const auto labels = set.labels();
    const auto split = stratified_split(labels, cfg.val_fraction, cfg.train.seed);
    const auto tr = set.select(split.train);
    const auto va = set.select(split.validation);

    FeatureTransform ft = in.transform.empty() ? FeatureTransform::fit(cfg.transform, tr)
                                               : FeatureTransform::deserialize(read_file(in.transform));
    Model model;
    if (!in.init_model.empty()) {
        model = Model::deserialize(read_file(in.init_model));
        check_compatible(model, ft);
        require(model.label_kind == set.label_kind(), "initial model uses a different label kind", "model");
    } else {
        model = Model::init(ft.output_dim(), cfg.train.seed, cfg.model);
        model.transform_fingerprint = ft.fingerprint();
        model.label_kind = set.label_kind();
    }
    const Model::Matrix Xtr = ft.apply(tr).cast<float>();
    const Model::Matrix Xva = ft.apply(va).cast<float>();
    const auto history = train_model(model, Xtr, tr.labels(), Xva, va.labels(), cfg.train,
                                     [](std::size_t epoch, const TrainHistory& h) {
                                         std::fprintf(stderr, "epoch %zu loss %.4f val_acc %.4f lr %.6g\n", epoch,
                                                      h.train_loss.back(), h.val_accuracy.back(),
                                                      h.learning_rate.back());
                                     });
    write_file_atomic(out / "transform.xft", ft.serialize());
    write_file_atomic(out / "model.xmlp", model.serialize());
    return {{"train_traces", tr.size()},
            {"validation_traces", va.size()},
            {"transform", to_string(ft.spec().kind)},
            {"fingerprint", ft.fingerprint()},
            {"parameters", model.parameter_count()},
            {"history", history_json(history)},
            {"outputs", {"transform.xft", "model.xmlp"}}};
}

json cmd_select(const RunConfig& cfg, const Inputs& in, const fs::path& out) {
    const auto set = load_inputs(in.traces, cfg.campaign.label_kind);
    const auto per_device = split_by_device(set);
    const auto pois = find_pois(set, cfg.select.n_pois, cfg.select.min_separation);
    const auto means = device_means(per_device, pois);
    const auto sel = select_devices(means, cfg.select.n_devices, cfg.select.mode, cfg.seed, cfg.select.first_device);
    auto j = sel.to_json();
    j["pois"] = pois.indices;
    j["dispersion"] = centroid_dispersion(means, sel.devices);
    write_json(out / "selection.json", j);
    j["output"] = "selection.json";
    return j;
}

json snr_json(const SnrEstimate& e) {
    return {{"snr_db", e.snr_db}, {"snr_linear", e.snr_linear[e.top_poi]}, {"top_poi", e.top_poi}};
}

json cmd_snr(const RunConfig& cfg, const Inputs& in, const fs::path& out) {
    const auto set = load_inputs(in.traces, cfg.campaign.label_kind);
    const auto per_device = split_by_device(set);
    std::vector<ClassStats> stats;
    json devices = json::array();
    for (const auto& d : per_device) {
        stats.push_back(ClassStats::of(d));
        auto j = snr_json(snr(stats.back(), cfg.leakage.snr_class));
        j["device_id"] = d[0].device_id;
        devices.push_back(std::move(j));
    }
    const auto k = std::min(cfg.leakage.pooled_max_devices, stats.size());
    const auto curve_db = pooled_snr_curve(stats, k, cfg.leakage.snr_class, 64, cfg.seed);
    json j{{"devices", devices}, {"pooled_snr_db", curve_db}, {"class", detail::snr_class_name(cfg.leakage.snr_class)}};
    write_json(out / "snr.json", j);
    j["output"] = "snr.json";
    return j;
}

json cmd_tvla(const RunConfig& cfg, const Inputs& in, const fs::path& out) {
    TraceSet fixed, random;
    if (!in.fixed.empty() || !in.random.empty()) {
        require(!in.fixed.empty() && !in.random.empty(), "--fixed and --random go together", "input");
        fixed = read_traces(in.fixed);
        random = read_traces(in.random);
    } else {
        const auto dev = gen_device(cfg.generator, cfg.attack.device_id);
        std::tie(fixed, random) = gen_tvla_sets(cfg.generator, dev, cfg.campaign.location,
                                                cfg.leakage.tvla_traces_per_group, cfg.leakage.tvla_fixed_plaintext,
                                                cfg.leakage.tvla_key);
    }
    const auto r = tvla(fixed, random);
    std::string csv = "sample,t\n";
    for (std::size_t i = 0; i < r.t.size(); ++i)
        csv += std::to_string(i) + "," + format_double(r.t[i]) + "\n";
    write_file_atomic(out / "tvla_t.csv", csv);
    return {{"max_abs_t", r.max_abs_t},
            {"argmax", r.argmax},
            {"threshold", kTvlaThreshold},
            {"leaks", r.leaks},
            {"traces_per_group", fixed.size()},
            {"output", "tvla_t.csv"}};
}

json cema_json(const CemaResult& r) {
    json cps = json::array();
    for (const auto& c : r.checkpoints)
        cps.push_back({{"traces", c.n_traces}, {"true_key_rank", c.true_key_rank}, {"best_guess", c.best_guess}});
    return {{"true_key", r.true_key},
            {"best_guess", r.best_guess},
            {"mtd", r.mtd ? json(*r.mtd) : json(nullptr)},
            {"checkpoints", cps}};
}

json cmd_cema(const RunConfig& cfg, const Inputs& in, const fs::path& out) {
    const auto set = load_inputs(in.traces, cfg.campaign.label_kind);
    const auto r = cema(set, cfg.leakage.cema_schedule);
    auto j = cema_json(r);
    write_json(out / "cema.json", j);
    j["output"] = "cema.json";
    return j;
}

json cmd_attack(const RunConfig& cfg, const Inputs& in, const fs::path& out) {
    require(!in.model.empty(), "--model is required", "model");
    require(!in.transform.empty(), "--transform is required", "transform");
    auto model = Model::deserialize(read_file(in.model));
    const auto ft = FeatureTransform::deserialize(read_file(in.transform));
    check_compatible(model, ft);
    const auto set = to_averaging(load_inputs(in.traces, cfg.campaign.label_kind), ft.spec().averaging_n);
    const auto parts = split_by_location(set);
    std::vector<CellTraces> cells;
    for (const auto& p : parts)
        cells.push_back({p[0].location, &p});
    if (cfg.attack.quadrant)
        cells = cells_in_quadrant(cells, cfg.generator.grid_size, *cfg.attack.quadrant);
    require(!cells.empty(), "no traces in the selected cells", "attack.quadrant");
    ScanOptions opt;
    opt.queries_per_cell = cfg.attack.queries;
    opt.r_min = cfg.attack.r_min;
    opt.blind = cfg.attack.blind;
    const auto res = scan_attack(model, ft, cfg.generator.grid_size, cells, opt);
    write_heatmap(out, "confidence", res.confidence);
    if (!opt.blind)
        write_heatmap(out, "accuracy", res.accuracy);
    json j{{"cells", cells.size()}, {"queries", res.queries}, {"report", res.report.to_json()}};
    j["best_cell"] = res.best_cell ? location_json(*res.best_cell) : json(nullptr);
    if (res.best_cell) {
        for (const auto& c : cells)
            if (c.location == *res.best_cell) {
                const auto b = attack_budget(model, ft, *c.set, opt.r_min);
                j["attack_budget"] = b ? json(*b) : json(nullptr);
            }
    }
    write_json(out / "report.json", j);
    return j;
}

json cmd_report(const Inputs& in, const fs::path& out) {
    require(!in.runs.empty(), "at least one --run directory is required", "input");
    json runs = json::array();
    for (const auto& r : in.runs) {
        const auto s = json::parse(read_file(fs::path(r) / "summary.json"), nullptr, false);
        if (s.is_discarded())
            throw ValidationError("summary.json in " + r + " is not valid JSON", "input");
        runs.push_back({{"run", r}, {"summary", s}});
    }
    json j{{"runs", runs}};
    write_json(out / "report.json", j);
    return {{"runs", in.runs.size()}, {"output", "report.json"}};
}

int report_failure(const fs::path& out, const CLI::App& app, const std::exception& e, int code) {
    std::fprintf(stderr, "error: %s\n", e.what());
    json j{{"command", app.get_subcommands().front()->get_name()}, {"status", "error"}, {"error", e.what()},
           {"exit_code", code}};
    if (const auto* v = dynamic_cast<const ValidationError*>(&e); v && !v->key().empty())
        j["key"] = v->key();
    try {
        write_json(out / "summary.json", j);
    } catch (const std::exception&) {
    }
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-device EM side-channel toolkit"};
    app.require_subcommand(1);
    Globals g;
    Inputs in;
    app.add_option("--config", g.config, "JSON run configuration");
    app.add_option("--seed", g.seed, "Overrides the configuration seed");
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output directory");

    auto* gen = app.add_subcommand("gen", "Generate synthetic traces");
    auto* pre = app.add_subcommand("preprocess", "Fit a feature transform");
    auto* train = app.add_subcommand("train", "Train the classifier");
    auto* sel = app.add_subcommand("select", "Select training devices");
    auto* snr_cmd = app.add_subcommand("snr", "Per-device and pooled SNR");
    auto* tvla_cmd = app.add_subcommand("tvla", "Fixed-vs-random t-test");
    auto* cema_cmd = app.add_subcommand("cema", "Correlation EM analysis");
    auto* attack = app.add_subcommand("attack", "Scan a grid and recover the key");
    auto* report = app.add_subcommand("report", "Collect run summaries");

    for (auto* s : {pre, train, sel, snr_cmd, cema_cmd, attack})
        s->add_option("-i,--input", in.traces, "Trace files (.emt or .csv)")->required();
    train->add_option("--transform", in.transform, "Previously fitted transform");
    train->add_option("--init-model", in.init_model, "Checkpoint to continue from");
    attack->add_option("--transform", in.transform, "Fitted transform")->required();
    attack->add_option("--model", in.model, "Model checkpoint")->required();
    tvla_cmd->add_option("--fixed", in.fixed, "Fixed-group traces");
    tvla_cmd->add_option("--random", in.random, "Random-group traces");
    report->add_option("--run", in.runs, "Run directories")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return e.get_exit_code() == 0 ? app.exit(e) : (app.exit(e), 2);
    }

    try {
        const auto cfg = load_run_config(g);
        const fs::path out = g.out;
        fs::create_directories(out);
        auto* cmd = app.get_subcommands().front();
        const auto t0 = std::chrono::steady_clock::now();
        json result;
        if (cmd == gen)
            result = cmd_gen(cfg, out);
        else if (cmd == pre)
            result = cmd_preprocess(cfg, in, out);
        else if (cmd == train)
            result = cmd_train(cfg, in, out);
        else if (cmd == sel)
            result = cmd_select(cfg, in, out);
        else if (cmd == snr_cmd)
            result = cmd_snr(cfg, in, out);
        else if (cmd == tvla_cmd)
            result = cmd_tvla(cfg, in, out);
        else if (cmd == cema_cmd)
            result = cmd_cema(cfg, in, out);
        else if (cmd == attack)
            result = cmd_attack(cfg, in, out);
        else
            result = cmd_report(in, out);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_json(out / "resolved_config.json", config_to_json(cfg));
        write_json(out / "summary.json", {{"command", cmd->get_name()}, {"status", "ok"}, {"result", result}});
        std::fprintf(stderr, "%s finished in %.1f s\n", cmd->get_name().c_str(), secs);
        return 0;
    } catch (const ValidationError& e) {
        return report_failure(g.out, app, e, 2);
    } catch (const std::exception& e) {
        return report_failure(g.out, app, e, 1);
    }
}
