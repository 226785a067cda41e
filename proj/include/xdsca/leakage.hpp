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

// Leakage assessment: class-conditional SNR, Welch t-test (TVLA), correlation
// analysis with minimum traces to disclosure, and per-location heatmaps.

#include <xdsca/aes.hpp>
#include <xdsca/error.hpp>
#include <xdsca/random.hpp>
#include <xdsca/trace.hpp>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace xdsca {

inline constexpr double kTvlaThreshold = 4.5;
inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// SNR

enum class SnrClass { HammingWeight, Byte };

// Per-intermediate-value sufficient statistics of a trace set.
struct ClassStats {
    std::size_t length = 0;
    std::array<std::size_t, 256> count{};
    Eigen::MatrixXd sum;    // 256 x L
    Eigen::VectorXd sumsq;  // L

    explicit ClassStats(std::size_t L = 0) : length(L), sum(Eigen::MatrixXd::Zero(256, Eigen::Index(L))),
                                             sumsq(Eigen::VectorXd::Zero(Eigen::Index(L))) {}

    static ClassStats of(const TraceSet& set) {
        ClassStats s(set.trace_length());
        for (const auto& t : set) {
            const auto v = t.intermediate_value();
            ++s.count[v];
            auto row = s.sum.row(v);
            for (std::size_t i = 0; i < s.length; ++i) {
                const double x = t.samples[i];
                row(Eigen::Index(i)) += x;
                s.sumsq(Eigen::Index(i)) += x * x;
            }
        }
        return s;
    }

    ClassStats& operator+=(const ClassStats& o) {
        require(o.length == length, "trace length mismatch");
        for (std::size_t c = 0; c < 256; ++c)
            count[c] += o.count[c];
        sum += o.sum;
        sumsq += o.sumsq;
        return *this;
    }

    std::size_t total() const { return std::accumulate(count.begin(), count.end(), std::size_t{0}); }

    // Class sums collapsed to the requested partition (9 or 256 classes).
    std::pair<std::vector<std::size_t>, Eigen::MatrixXd> grouped(SnrClass cls) const {
        if (cls == SnrClass::Byte)
            return {std::vector<std::size_t>(count.begin(), count.end()), sum};
        std::vector<std::size_t> n(9, 0);
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(9, Eigen::Index(length));
        for (int v = 0; v < 256; ++v) {
            const auto h = hamming_weight(std::uint8_t(v));
            n[h] += count[v];
            s.row(h) += sum.row(v);
        }
        return {n, s};
    }

    // Sum over HW-class pairs of |mean difference|, per sample.
    Eigen::VectorXd dom() const {
        auto [n, s] = grouped(SnrClass::HammingWeight);
        Eigen::VectorXd out = Eigen::VectorXd::Zero(Eigen::Index(length));
        for (int a = 0; a < 9; ++a)
            for (int b = a + 1; b < 9; ++b)
                if (n[a] && n[b])
                    out += (s.row(a) / double(n[a]) - s.row(b) / double(n[b])).cwiseAbs().transpose();
        return out;
    }
};

struct SnrEstimate {
    std::vector<double> signal;     // variance of class means
    std::vector<double> noise;      // pooled within-class variance
    std::vector<double> snr_linear;
    std::size_t top_poi = 0;        // highest DOM sample
    double snr_db = 0;              // at top_poi; +inf when noise vanishes
};

inline double to_db(double linear) { return linear == kInf ? kInf : 10.0 * std::log10(linear); }

inline SnrEstimate snr(const ClassStats& st, SnrClass cls) {
    auto [n, s] = st.grouped(cls);
    std::size_t occupied = 0;
    for (auto c : n) {
        if (c == 1)
            throw ValidationError("SNR needs at least 2 traces in every occupied class");
        occupied += c > 0;
    }
    if (occupied < 2)
        throw ValidationError("SNR needs traces from at least 2 classes");
    const double N = double(st.total());
    const auto L = Eigen::Index(st.length);
    const Eigen::RowVectorXd mu = s.colwise().sum() / N;
    SnrEstimate e;
    e.signal.assign(st.length, 0.0);
    e.noise.assign(st.length, 0.0);
    e.snr_linear.assign(st.length, 0.0);
    Eigen::RowVectorXd between = Eigen::RowVectorXd::Zero(L); // sum_c sum_c^2 / n_c
    Eigen::RowVectorXd sig = Eigen::RowVectorXd::Zero(L);
    for (std::size_t c = 0; c < n.size(); ++c) {
        if (!n[c])
            continue;
        const Eigen::RowVectorXd m = s.row(Eigen::Index(c)) / double(n[c]);
        between += (s.row(Eigen::Index(c)).array() * m.array()).matrix();
        sig += double(n[c]) * (m - mu).array().square().matrix();
    }
    for (Eigen::Index i = 0; i < L; ++i) {
        const double raw = st.sumsq(i);
        const double noise = std::max(0.0, (raw - between(i)) / N);
        const double signal = sig(i) / N;
        const double tiny = 1e-12 * raw / N;
        e.signal[std::size_t(i)] = signal;
        e.noise[std::size_t(i)] = noise <= tiny ? 0.0 : noise;
        const double nz = e.noise[std::size_t(i)];
        e.snr_linear[std::size_t(i)] = nz > 0 ? signal / nz : (signal > tiny ? kInf : 0.0);
    }
    const Eigen::VectorXd d = st.dom();
    Eigen::Index top = 0;
    d.maxCoeff(&top);
    e.top_poi = std::size_t(top);
    e.snr_db = to_db(e.snr_linear[e.top_poi]);
    return e;
}

inline SnrEstimate snr(const TraceSet& set, SnrClass cls) { return snr(ClassStats::of(set), cls); }

// Pooled SNR when profiling on k devices drawn from the pool, for k = 1..max_k.
// Linear SNR is averaged over all k-subsets (or `max_subsets` seeded random
// ones when there are more) and reported in dB.
inline std::vector<double> pooled_snr_curve(std::span<const ClassStats> per_device, std::size_t max_k,
                                            SnrClass cls, std::size_t max_subsets = 64, std::uint64_t seed = 0) {
    const auto D = per_device.size();
    require(max_k >= 1 && max_k <= D, "k must lie in [1, number of devices]");
    std::vector<double> out;
    for (std::size_t k = 1; k <= max_k; ++k) {
        std::vector<std::vector<std::size_t>> subsets;
        double combos = 1;
        for (std::size_t i = 0; i < k; ++i)
            combos = combos * double(D - i) / double(i + 1);
        if (combos <= double(max_subsets)) {
            std::vector<bool> pick(D, false);
            std::fill(pick.begin(), pick.begin() + std::ptrdiff_t(k), true);
            do {
                std::vector<std::size_t> s;
                for (std::size_t i = 0; i < D; ++i)
                    if (pick[i])
                        s.push_back(i);
                subsets.push_back(std::move(s));
            } while (std::prev_permutation(pick.begin(), pick.end()));
        } else {
            auto rng = make_rng(seed, {stream::kSelect, k});
            std::vector<std::size_t> ids(D);
            for (std::size_t r = 0; r < max_subsets; ++r) {
                std::iota(ids.begin(), ids.end(), std::size_t{0});
                std::shuffle(ids.begin(), ids.end(), rng);
                subsets.emplace_back(ids.begin(), ids.begin() + std::ptrdiff_t(k));
            }
        }
        double acc = 0;
        for (const auto& s : subsets) {
            ClassStats pooled = per_device[s[0]];
            for (std::size_t i = 1; i < s.size(); ++i)
                pooled += per_device[s[i]];
            const auto e = snr(pooled, cls);
            acc += e.snr_linear[e.top_poi];
        }
        out.push_back(to_db(acc / double(subsets.size())));
    }
    return out;
}

// ---------------------------------------------------------------------------
// TVLA

struct TvlaResult {
    std::vector<double> t;
    double max_abs_t = 0;
    std::size_t argmax = 0;
    bool leaks = false;
};

inline TvlaResult tvla(const TraceSet& fixed, const TraceSet& random, double threshold = kTvlaThreshold) {
    require(!fixed.empty() && !random.empty(), "both TVLA groups must be nonempty");
    require(fixed.trace_length() == random.trace_length(), "TVLA groups differ in trace length");
    const auto L = fixed.trace_length();
    auto moments = [L](const TraceSet& s) {
        std::vector<double> mean(L, 0.0), m2(L, 0.0);
        double n = 0;
        for (const auto& t : s) { // Welford
            n += 1;
            for (std::size_t i = 0; i < L; ++i) {
                const double d = t.samples[i] - mean[i];
                mean[i] += d / n;
                m2[i] += d * (t.samples[i] - mean[i]);
            }
        }
        for (auto& v : m2)
            v = n > 1 ? v / (n - 1) : 0.0;
        return std::tuple{mean, m2, n};
    };
    const auto [mf, vf, nf] = moments(fixed);
    const auto [mr, vr, nr] = moments(random);
    TvlaResult r;
    r.t.resize(L);
    for (std::size_t i = 0; i < L; ++i) {
        const double se2 = vf[i] / nf + vr[i] / nr;
        r.t[i] = se2 > 0 ? (mf[i] - mr[i]) / std::sqrt(se2) : 0.0;
        if (std::abs(r.t[i]) > r.max_abs_t) {
            r.max_abs_t = std::abs(r.t[i]);
            r.argmax = i;
        }
    }
    r.leaks = r.max_abs_t > threshold;
    return r;
}

// ---------------------------------------------------------------------------
// Correlation analysis

inline double pearson(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size() && !x.empty(), "pearson needs equal-length nonempty inputs");
    const double n = double(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

inline const std::vector<std::size_t>& default_cema_schedule() {
    static const std::vector<std::size_t> s{10, 20, 50, 100, 200, 250, 500, 1000, 2000};
    return s;
}

struct CemaCheckpoint {
    std::size_t n_traces = 0;
    std::uint8_t best_guess = 0;
    std::size_t true_key_rank = 0; // 1 = first
    std::array<double, 256> peak{};
};

struct CemaResult {
    Eigen::MatrixXd rho;            // 256 x L at the last evaluated count
    std::array<double, 256> peak{}; // max_t |rho| at the last count
    std::uint8_t best_guess = 0;
    std::uint8_t true_key = 0;
    std::vector<CemaCheckpoint> checkpoints;
    std::optional<std::size_t> mtd;

    double mtd_or_inf() const { return mtd ? double(*mtd) : kInf; }
};

// Correlates HW(sbox(pt ^ guess)) with every sample, at each schedule count
// that the set can supply. MTD is the smallest count from which the true key
// ranks strictly first at every later evaluated count.
inline CemaResult cema(const TraceSet& set, std::span<const std::size_t> schedule = default_cema_schedule()) {
    require(!set.empty(), "CEMA needs traces");
    const auto key = set[0].key;
    for (const auto& t : set)
        if (t.key != key)
            throw ValidationError("CEMA expects a single fixed key in the trace set");
    std::vector<std::size_t> counts;
    for (auto c : schedule)
        if (c >= 1 && c <= set.size())
            counts.push_back(c);
    std::sort(counts.begin(), counts.end());
    counts.erase(std::unique(counts.begin(), counts.end()), counts.end());
    if (counts.empty())
        throw ValidationError("no schedule entry is <= the " + std::to_string(set.size()) + " available traces",
                              "cema.schedule");

    const auto L = Eigen::Index(set.trace_length());
    Eigen::MatrixXd H(256, 256); // guess x plaintext
    for (int g = 0; g < 256; ++g)
        for (int p = 0; p < 256; ++p)
            H(g, p) = hamming_weight(sbox(std::uint8_t(p ^ g)));
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(256, L);
    Eigen::VectorXd cnt = Eigen::VectorXd::Zero(256);
    Eigen::RowVectorXd sx = Eigen::RowVectorXd::Zero(L), sxx = Eigen::RowVectorXd::Zero(L);

    CemaResult res;
    res.true_key = key;
    std::size_t next = 0;
    for (std::size_t i = 0; i < set.size() && next < counts.size(); ++i) {
        const auto& t = set[i];
        cnt(t.plaintext) += 1;
        for (Eigen::Index j = 0; j < L; ++j) {
            const double x = t.samples[std::size_t(j)];
            S(t.plaintext, j) += x;
            sx(j) += x;
            sxx(j) += x * x;
        }
        if (i + 1 != counts[next])
            continue;
        const double n = double(i + 1);
        const Eigen::MatrixXd shx = H * S;             // 256 x L
        const Eigen::VectorXd sh = H * cnt;            // 256
        const Eigen::VectorXd shh = H.cwiseProduct(H) * cnt;
        const Eigen::RowVectorXd vx = n * sxx - sx.cwiseProduct(sx);
        Eigen::MatrixXd rho(256, L);
        CemaCheckpoint cp;
        cp.n_traces = i + 1;
        for (Eigen::Index g = 0; g < 256; ++g) {
            const double vh = n * shh(g) - sh(g) * sh(g);
            double peak = 0;
            for (Eigen::Index j = 0; j < L; ++j) {
                const double den = vh * vx(j);
                const double r = den > 1e-12 * std::abs(n * n) ? (n * shx(g, j) - sh(g) * sx(j)) / std::sqrt(den) : 0.0;
                rho(g, j) = std::clamp(r, -1.0, 1.0);
                peak = std::max(peak, std::abs(rho(g, j)));
            }
            cp.peak[std::size_t(g)] = peak;
        }
        std::size_t best = 0, rank = 1;
        for (std::size_t g = 0; g < 256; ++g) {
            if (cp.peak[g] > cp.peak[best])
                best = g;
            if (g != key && cp.peak[g] >= cp.peak[key])
                ++rank;
        }
        cp.best_guess = std::uint8_t(best);
        cp.true_key_rank = rank;
        res.checkpoints.push_back(cp);
        res.rho = std::move(rho);
        ++next;
    }
    res.peak = res.checkpoints.back().peak;
    res.best_guess = res.checkpoints.back().best_guess;
    for (std::size_t k = res.checkpoints.size(); k-- > 0;) {
        if (res.checkpoints[k].true_key_rank != 1)
            break;
        res.mtd = res.checkpoints[k].n_traces;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Heatmaps

enum class MetricKind { TMax, Mtd, Accuracy, Confidence };

inline std::string_view to_string(MetricKind m) {
    switch (m) {
    case MetricKind::TMax: return "tmax";
    case MetricKind::Mtd: return "mtd";
    case MetricKind::Accuracy: return "accuracy";
    case MetricKind::Confidence: return "confidence";
    }
    return "?";
}

struct Heatmap {
    std::size_t grid = 0;
    MetricKind metric = MetricKind::TMax;
    std::vector<double> values; // row-major; NaN = missing, +inf = not reached
    bool complete = true;
    nlohmann::json provenance = nlohmann::json::object();

    Heatmap() = default;
    Heatmap(std::size_t g, MetricKind m) : grid(g), metric(m), values(g * g, kNaN) {}

    double& at(GridLocation c) { return values[std::size_t(c.row) * grid + c.col]; }
    double at(GridLocation c) const { return values[std::size_t(c.row) * grid + c.col]; }

    // Lowest-index cell with the largest (or smallest) finite value.
    std::optional<GridLocation> extreme(bool largest) const {
        std::optional<GridLocation> best;
        double bv = 0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double v = values[i];
            if (std::isnan(v))
                continue;
            if (!best || (largest ? v > bv : v < bv)) {
                best = GridLocation{std::uint8_t(i / grid), std::uint8_t(i % grid)};
                bv = v;
            }
        }
        return best;
    }

    std::string to_csv() const {
        std::ostringstream os;
        os.precision(17);
        for (std::size_t r = 0; r < grid; ++r) {
            for (std::size_t c = 0; c < grid; ++c) {
                const double v = values[r * grid + c];
                if (c)
                    os << ',';
                if (std::isnan(v))
                    os << "nan";
                else if (std::isinf(v))
                    os << (v > 0 ? "inf" : "-inf");
                else
                    os << v;
            }
            os << '\n';
        }
        return os.str();
    }

    // Binary graymap, finite values scaled to 0..255; +inf maps to white,
    // missing cells to black.
    std::string to_pgm() const {
        double lo = kInf, hi = -kInf;
        for (double v : values)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        std::string out = "P5\n" + std::to_string(grid) + " " + std::to_string(grid) + "\n255\n";
        for (double v : values) {
            unsigned char px = 0;
            if (std::isinf(v))
                px = v > 0 ? 255 : 0;
            else if (std::isfinite(v))
                px = hi > lo ? static_cast<unsigned char>(std::lround(255.0 * (v - lo) / (hi - lo))) : 128;
            out.push_back(static_cast<char>(px));
        }
        return out;
    }

    nlohmann::json to_json() const {
        auto cell = [](std::optional<GridLocation> c) {
            return c ? nlohmann::json{{"row", c->row}, {"col", c->col}} : nlohmann::json(nullptr);
        };
        nlohmann::json vals = nlohmann::json::array();
        for (double v : values) {
            if (std::isnan(v))
                vals.push_back(nullptr);
            else if (std::isinf(v))
                vals.push_back(v > 0 ? "inf" : "-inf");
            else
                vals.push_back(v);
        }
        nlohmann::json j{{"metric", to_string(metric)},
                         {"grid", grid},
                         {"complete", complete},
                         {"max_cell", cell(extreme(true))},
                         {"min_cell", cell(extreme(false))},
                         {"values", std::move(vals)},
                         {"provenance", provenance}};
        if (metric == MetricKind::TMax) {
            j["threshold"] = kTvlaThreshold;
            std::size_t above = 0;
            for (double v : values)
                above += v > kTvlaThreshold;
            j["cells_above_threshold"] = above;
        }
        return j;
    }
};

struct CellTraces {
    GridLocation location;
    const TraceSet* set = nullptr;
};

// Applies `evaluator` to every cell with data; cells without data stay NaN and
// clear the completeness flag.
inline Heatmap heatmap_scan(std::size_t grid, MetricKind metric, std::span<const CellTraces> cells,
                            const std::function<double(const TraceSet&)>& evaluator) {
    require(grid >= 1, "grid must be >= 1", "generator.grid_size");
    Heatmap h(grid, metric);
    for (const auto& c : cells) {
        require(c.location.row < grid && c.location.col < grid, "cell outside the grid");
        require(c.set != nullptr, "cell without traces");
        h.at(c.location) = evaluator(*c.set);
    }
    h.complete = std::none_of(h.values.begin(), h.values.end(), [](double v) { return std::isnan(v); });
    return h;
}

// Ranks with ties sharing their average rank (1-based).
inline std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]])
            ++j;
        const double avg = (double(i) + double(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

// Spearman rank correlation over pairs where neither value is NaN
// (infinities rank as extreme values).
inline double spearman(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "spearman needs equal-length inputs");
    std::vector<double> x, y;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isnan(a[i]) && !std::isnan(b[i])) {
            x.push_back(a[i]);
            y.push_back(b[i]);
        }
    require(x.size() >= 2, "spearman needs at least 2 complete pairs");
    const auto rx = average_ranks(x), ry = average_ranks(y);
    return pearson(rx, ry);
}

} // namespace xdsca
