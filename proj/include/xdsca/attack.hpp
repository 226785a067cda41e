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

// Profiled single-byte attack on an unseen device: per-trace classification,
// first-vs-second frequency confidence, per-location scans and trace budgets.

#include <xdsca/aes.hpp>
#include <xdsca/error.hpp>
#include <xdsca/leakage.hpp>
#include <xdsca/mlp.hpp>
#include <xdsca/preprocess.hpp>
#include <xdsca/trace.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace xdsca {

inline constexpr double kDefaultRatioMin = 2.0;

template <typename T>
void check_compatible(const Mlp<T>& model, const FeatureTransform& ft) {
    if (model.transform_fingerprint != ft.fingerprint())
        throw ValidationError("model was trained against a different feature transform", "model");
    if (model.input_dim() != ft.output_dim())
        throw ValidationError("model input width does not match the transform output", "model");
}

template <typename T>
Eigen::MatrixXd predict_probs(Mlp<T>& model, const FeatureTransform& ft, const TraceSet& traces) {
    check_compatible(model, ft);
    for (const auto& t : traces)
        if (t.n_averaged != ft.spec().averaging_n)
            throw ValidationError("trace averaged " + std::to_string(t.n_averaged) + "x but the model expects " +
                                      std::to_string(ft.spec().averaging_n) + "x",
                                  "transform.averaging_n");
    return model.predict(ft.apply(traces).cast<T>());
}

inline std::vector<std::uint8_t> argmax_rows(const Eigen::MatrixXd& probs) {
    std::vector<std::uint8_t> out(std::size_t(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index arg;
        probs.row(i).maxCoeff(&arg);
        out[std::size_t(i)] = std::uint8_t(arg);
    }
    return out;
}

// Predicted class per trace, in the model's label space.
template <typename T>
std::vector<std::uint8_t> predict_batch(Mlp<T>& model, const FeatureTransform& ft, const TraceSet& traces) {
    return argmax_rows(predict_probs(model, ft, traces));
}

// Maps class predictions to key-byte guesses (S-box-output labels are inverted
// through the known plaintext).
inline std::vector<std::uint8_t> key_guesses(std::span<const std::uint8_t> predictions, const TraceSet& traces,
                                             LabelKind kind) {
    require(predictions.size() == traces.size(), "one prediction per trace required");
    std::vector<std::uint8_t> out(predictions.begin(), predictions.end());
    if (kind == LabelKind::SboxOutput)
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = std::uint8_t(inv_sbox(out[i]) ^ traces[i].plaintext);
    return out;
}

enum class Verdict { Confident, Inconclusive };

inline std::string_view to_string(Verdict v) { return v == Verdict::Confident ? "confident" : "inconclusive"; }

struct AttackReport {
    std::uint8_t key = 0;
    std::vector<std::pair<std::uint8_t, std::size_t>> histogram; // top 5, by count then value
    double ratio = 1.0;                                          // +inf when only one value occurs
    std::size_t traces_used = 0;
    std::optional<GridLocation> location;
    Verdict verdict = Verdict::Inconclusive;

    nlohmann::json to_json() const {
        nlohmann::json hist = nlohmann::json::array();
        for (auto [v, c] : histogram)
            hist.push_back({{"value", v}, {"count", c}});
        nlohmann::json j{{"key", key},
                         {"histogram", std::move(hist)},
                         {"ratio", std::isinf(ratio) ? nlohmann::json("inf") : nlohmann::json(ratio)},
                         {"traces_used", traces_used},
                         {"verdict", to_string(verdict)}};
        j["location"] = location ? nlohmann::json{{"row", location->row}, {"col", location->col}}
                                 : nlohmann::json(nullptr);
        return j;
    }
};

// Mode of the guesses (ties: lowest value) and count(first) / count(second).
// Confident needs r >= r_min, at least two queries and no more than max_traces.
inline AttackReport recover_key(std::span<const std::uint8_t> guesses, double r_min = kDefaultRatioMin,
                                std::size_t max_traces = std::numeric_limits<std::size_t>::max(),
                                std::optional<GridLocation> location = std::nullopt) {
    if (guesses.empty())
        throw ValidationError("key recovery needs at least one prediction");
    std::array<std::size_t, 256> count{};
    for (auto g : guesses)
        ++count[g];
    std::vector<std::uint8_t> order;
    for (int v = 0; v < 256; ++v)
        if (count[v])
            order.push_back(std::uint8_t(v));
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return count[a] > count[b]; });
    AttackReport r;
    r.key = order[0];
    for (std::size_t i = 0; i < order.size() && i < 5; ++i)
        r.histogram.emplace_back(order[i], count[order[i]]);
    r.ratio = order.size() > 1 ? double(count[order[0]]) / double(count[order[1]]) : kInf;
    r.traces_used = guesses.size();
    r.location = location;
    r.verdict = r.ratio >= r_min && r.traces_used >= 2 && r.traces_used <= max_traces ? Verdict::Confident
                                                                                         : Verdict::Inconclusive;
    return r;
}

// Smallest m such that every prefix of m..N guesses yields a Confident verdict.
inline std::optional<std::size_t> attack_budget(std::span<const std::uint8_t> guesses,
                                                double r_min = kDefaultRatioMin) {
    std::optional<std::size_t> budget;
    for (std::size_t m = guesses.size(); m >= 1; --m) {
        if (recover_key(guesses.first(m), r_min).verdict != Verdict::Confident)
            break;
        budget = m;
    }
    return budget;
}

template <typename T>
std::optional<std::size_t> attack_budget(Mlp<T>& model, const FeatureTransform& ft, const TraceSet& cell,
                                         double r_min = kDefaultRatioMin) {
    const auto g = key_guesses(predict_batch(model, ft, cell), cell, model.label_kind);
    return attack_budget(g, r_min);
}

// Quadrant index 0..3 (row-major halves) of a grid cell.
inline int quadrant_of(GridLocation c, std::size_t grid) {
    const std::size_t half = (grid + 1) / 2;
    return (c.row >= half ? 2 : 0) + (c.col >= half ? 1 : 0);
}

inline std::vector<CellTraces> cells_in_quadrant(std::span<const CellTraces> cells, std::size_t grid, int q) {
    std::vector<CellTraces> out;
    for (const auto& c : cells)
        if (quadrant_of(c.location, grid) == q)
            out.push_back(c);
    return out;
}

struct ScanResult {
    Heatmap accuracy;   // NaN everywhere in blind mode
    Heatmap confidence;
    std::optional<GridLocation> best_cell;
    AttackReport report;
    std::size_t queries = 0; // traces classified for the confidence map
};

struct ScanOptions {
    std::size_t queries_per_cell = 20;
    double r_min = kDefaultRatioMin;
    bool blind = false;
};

// Best cell: largest ratio, then largest top count, then largest mean
// probability of the top class, then row-major order.
template <typename T>
ScanResult scan_attack(Mlp<T>& model, const FeatureTransform& ft, std::size_t grid,
                       std::span<const CellTraces> cells, const ScanOptions& opt = {}) {
    require(opt.queries_per_cell >= 1, "must be >= 1", "attack.queries");
    ScanResult res;
    res.accuracy = Heatmap(grid, MetricKind::Accuracy);
    res.confidence = Heatmap(grid, MetricKind::Confidence);
    struct Score {
        double ratio, top, prob;
    };
    std::optional<Score> best;
    for (const auto& c : cells) {
        require(c.set != nullptr && !c.set->empty(), "cell without traces");
        const auto& set = *c.set;
        const auto probs = predict_probs(model, ft, set);
        const auto preds = argmax_rows(probs);
        if (!opt.blind) {
            const auto labels = set.with_label_kind(model.label_kind).labels();
            res.accuracy.at(c.location) = evaluate_probs(probs, labels).accuracy;
        }
        const auto m = std::min(opt.queries_per_cell, set.size());
        const auto guesses = key_guesses(std::span(preds).first(m), set.head(m), model.label_kind);
        const auto rep = recover_key(guesses, opt.r_min, opt.queries_per_cell, c.location);
        res.queries += m;
        res.confidence.at(c.location) = rep.ratio;
        double prob = 0;
        for (std::size_t i = 0; i < m; ++i)
            prob += probs.row(Eigen::Index(i)).maxCoeff();
        const Score s{rep.ratio, double(rep.histogram[0].second), prob / double(m)};
        const bool better = !best || s.ratio > best->ratio ||
                            (s.ratio == best->ratio &&
                             (s.top > best->top || (s.top == best->top && s.prob > best->prob)));
        const bool earlier = best && s.ratio == best->ratio && s.top == best->top && s.prob == best->prob &&
                             (c.location.row < res.best_cell->row ||
                              (c.location.row == res.best_cell->row && c.location.col < res.best_cell->col));
        if (better || earlier) {
            best = s;
            res.best_cell = c.location;
            res.report = rep;
        }
    }
    res.accuracy.complete = !opt.blind && std::none_of(res.accuracy.values.begin(), res.accuracy.values.end(),
                                                       [](double v) { return std::isnan(v); });
    res.confidence.complete = std::none_of(res.confidence.values.begin(), res.confidence.values.end(),
                                           [](double v) { return std::isnan(v); });
    return res;
}

} // namespace xdsca
