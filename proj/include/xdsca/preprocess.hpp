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

// Trace preprocessing: averaging, PCA, LDA, FFT, spectrogram and per-feature
// standardization, combined into a fitted FeatureTransform.

#include <xdsca/bytes.hpp>
#include <xdsca/error.hpp>
#include <xdsca/trace.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <fftw3.h>

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace xdsca {

// ---------------------------------------------------------------------------
// Averaging

struct AveragingResult {
    TraceSet set;
    std::size_t dropped_groups = 0; // incomplete trailing chunks
    std::size_t dropped_traces = 0;
};

// Groups traces sharing (device, plaintext, key, location), in order of first
// appearance, and replaces every complete run of n traces by its mean.
inline AveragingResult average_traces(const TraceSet& in, std::size_t n) {
    if (n < 1)
        throw ValidationError("averaging factor must be >= 1", "transform.averaging_n");
    AveragingResult res;
    res.set = TraceSet(in.trace_length(), in.label_kind());
    if (n == 1) {
        res.set = in;
        return res;
    }
    using Key = std::tuple<std::uint32_t, std::uint8_t, std::uint8_t, std::uint8_t, std::uint8_t>;
    std::map<Key, std::size_t> index;
    std::vector<std::vector<const Trace*>> groups;
    for (const auto& t : in) {
        Key k{t.device_id, t.plaintext, t.key, t.location.row, t.location.col};
        auto [it, fresh] = index.try_emplace(k, groups.size());
        if (fresh)
            groups.emplace_back();
        groups[it->second].push_back(&t);
    }
    for (const auto& g : groups) {
        const std::size_t full = g.size() / n;
        for (std::size_t c = 0; c < full; ++c)
            res.set.push_back(mean_of(std::span(g).subspan(c * n, n)));
        if (g.size() % n != 0) {
            ++res.dropped_groups;
            res.dropped_traces += g.size() % n;
        }
    }
    if (res.set.empty())
        throw ValidationError("no complete group of " + std::to_string(n) + " traces with identical inputs",
                              "transform.averaging_n");
    return res;
}

// Rows are traces.
inline Eigen::MatrixXd to_matrix(const TraceSet& set) {
    Eigen::MatrixXd X(set.size(), set.trace_length());
    for (std::size_t i = 0; i < set.size(); ++i)
        for (std::size_t j = 0; j < set.trace_length(); ++j)
            X(Eigen::Index(i), Eigen::Index(j)) = set[i].samples[j];
    return X;
}

// ---------------------------------------------------------------------------
// Standardization

struct Standardizer {
    Eigen::VectorXd mean;        // over kept features
    Eigen::VectorXd stddev;      // population std, > 0
    std::vector<std::size_t> kept;
    std::vector<std::size_t> dropped; // zero-variance input features
    std::size_t input_dim = 0;

    static Standardizer fit(const Eigen::MatrixXd& X) {
        require(X.rows() >= 2, "standardizer needs at least 2 training vectors");
        Standardizer s;
        s.input_dim = std::size_t(X.cols());
        const Eigen::VectorXd mu = X.colwise().mean().transpose();
        const Eigen::VectorXd var = (X.rowwise() - mu.transpose()).array().square().colwise().mean().transpose();
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            const double sd = std::sqrt(var(j));
            if (sd > 1e-12 * (1.0 + std::abs(mu(j))))
                s.kept.push_back(std::size_t(j));
            else
                s.dropped.push_back(std::size_t(j));
        }
        s.mean.resize(Eigen::Index(s.kept.size()));
        s.stddev.resize(Eigen::Index(s.kept.size()));
        for (std::size_t i = 0; i < s.kept.size(); ++i) {
            s.mean(Eigen::Index(i)) = mu(Eigen::Index(s.kept[i]));
            s.stddev(Eigen::Index(i)) = std::sqrt(var(Eigen::Index(s.kept[i])));
        }
        return s;
    }

    std::size_t output_dim() const noexcept { return kept.size(); }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
        require(std::size_t(X.cols()) == input_dim, "feature dimension mismatch in standardizer");
        Eigen::MatrixXd out(X.rows(), Eigen::Index(kept.size()));
        for (std::size_t i = 0; i < kept.size(); ++i) {
            const auto c = Eigen::Index(i);
            out.col(c) = (X.col(Eigen::Index(kept[i])).array() - mean(c)) / stddev(c);
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// PCA

struct Pca {
    Eigen::VectorXd mean;
    Eigen::MatrixXd basis;       // dim x k, orthonormal columns
    Eigen::VectorXd explained;   // eigenvalues, descending
    std::size_t dropped = 0;     // requested directions with zero variance

    Eigen::MatrixXd project(const Eigen::MatrixXd& X) const { return (X.rowwise() - mean.transpose()) * basis; }
};

// Eigendecomposition of the sample covariance, carried out in the smaller of
// the feature and sample spaces.
inline Pca fit_pca(const Eigen::MatrixXd& X, std::size_t n_components) {
    const auto n = std::size_t(X.rows());
    const auto dim = std::size_t(X.cols());
    require(n >= 2, "PCA needs at least 2 training vectors");
    require(n_components >= 1 && n_components <= std::min(n, dim),
            "n_components must be in [1, min(n_traces, dim)]", "transform.n_components");
    Pca p;
    p.mean = X.colwise().mean().transpose();
    const Eigen::MatrixXd Xc = X.rowwise() - p.mean.transpose();
    const double denom = double(n - 1);

    Eigen::VectorXd evals;
    Eigen::MatrixXd evecs;
    if (dim <= n) {
        Eigen::MatrixXd C = Eigen::MatrixXd::Zero(Eigen::Index(dim), Eigen::Index(dim));
        C.selfadjointView<Eigen::Lower>().rankUpdate(Xc.transpose(), 1.0 / denom);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C.selfadjointView<Eigen::Lower>());
        evals = es.eigenvalues().reverse();
        evecs = es.eigenvectors().rowwise().reverse();
    } else {
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n));
        G.selfadjointView<Eigen::Lower>().rankUpdate(Xc, 1.0 / denom);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G.selfadjointView<Eigen::Lower>());
        evals = es.eigenvalues().reverse();
        const Eigen::MatrixXd U = es.eigenvectors().rowwise().reverse();
        evecs.resize(Eigen::Index(dim), Eigen::Index(n));
        for (Eigen::Index k = 0; k < Eigen::Index(n); ++k) {
            if (evals(k) > 0)
                evecs.col(k) = Xc.transpose() * U.col(k) / std::sqrt(denom * evals(k));
            else
                evecs.col(k).setZero();
        }
    }
    const double tol = std::max(evals.size() ? evals(0) : 0.0, 0.0) * 1e-12 * double(std::max(n, dim)) +
                       std::numeric_limits<double>::min();
    std::size_t keep = 0;
    while (keep < n_components && evals(Eigen::Index(keep)) > tol)
        ++keep;
    p.dropped = n_components - keep;
    p.basis = evecs.leftCols(Eigen::Index(keep));
    p.explained = evals.head(Eigen::Index(keep));
    return p;
}

// ---------------------------------------------------------------------------
// LDA

struct Lda {
    Eigen::VectorXd mean;
    Eigen::MatrixXd basis;      // dim x k, S_W-orthonormal
    Eigen::VectorXd eigenvalues; // generalized, descending
    double ridge = 0;

    Eigen::MatrixXd project(const Eigen::MatrixXd& X) const { return (X.rowwise() - mean.transpose()) * basis; }
};

// Between-class vs within-class scatter, S_B w = lambda (S_W + eps I) w.
// S_B = M M^T with M holding sqrt(n_c) (mu_c - mu), so the problem reduces to
// the C x C eigenproblem of M^T S_W^-1 M.
// ridge_scale sets eps = ridge_scale * trace(S_W) / dim; 0 disables it.
inline Lda fit_lda(const Eigen::MatrixXd& X, std::span<const std::uint8_t> labels, std::size_t n_components,
                   double ridge_scale = 1e-6) {
    const auto n = std::size_t(X.rows());
    const auto dim = Eigen::Index(X.cols());
    require(labels.size() == n, "one label per training vector required");
    std::array<std::size_t, 256> count{};
    for (auto l : labels)
        ++count[l];
    std::vector<int> classes;
    for (int c = 0; c < 256; ++c)
        if (count[c] > 0)
            classes.push_back(c);
    const auto C = classes.size();
    require(C >= 2, "LDA needs at least 2 classes");
    require(n_components >= 1 && n_components <= C - 1,
            "n_components must be in [1, classes - 1] (" + std::to_string(C - 1) + ")", "transform.n_components");
    require(n_components <= std::size_t(dim), "n_components exceeds the input dimension", "transform.n_components");

    Lda lda;
    lda.mean = X.colwise().mean().transpose();
    Eigen::MatrixXd means = Eigen::MatrixXd::Zero(256, dim);
    for (std::size_t i = 0; i < n; ++i)
        means.row(labels[i]) += X.row(Eigen::Index(i));
    for (int c : classes)
        means.row(c) /= double(count[c]);

    Eigen::MatrixXd W(Eigen::Index(n), dim);
    for (std::size_t i = 0; i < n; ++i)
        W.row(Eigen::Index(i)) = X.row(Eigen::Index(i)) - means.row(labels[i]);
    Eigen::MatrixXd Sw = Eigen::MatrixXd::Zero(dim, dim);
    Sw.selfadjointView<Eigen::Lower>().rankUpdate(W.transpose());
    Sw = Sw.selfadjointView<Eigen::Lower>();
    lda.ridge = ridge_scale * Sw.trace() / double(dim);
    Sw.diagonal().array() += lda.ridge;

    Eigen::LLT<Eigen::MatrixXd> llt(Sw);
    const auto& L = llt.matrixLLT();
    const double dmax = L.diagonal().cwiseAbs().maxCoeff();
    if (llt.info() != Eigen::Success || !(L.diagonal().cwiseAbs().minCoeff() > 1e-10 * dmax))
        throw ValidationError("within-class scatter is singular; enable ridge regularization",
                              "transform.lda_ridge");

    Eigen::MatrixXd M(dim, Eigen::Index(C));
    for (std::size_t k = 0; k < C; ++k)
        M.col(Eigen::Index(k)) = std::sqrt(double(count[classes[k]])) *
                                 (means.row(classes[k]).transpose() - lda.mean);
    const Eigen::MatrixXd Z = llt.solve(M);
    Eigen::MatrixXd K = M.transpose() * Z;
    K = 0.5 * (K + K.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
    const Eigen::VectorXd ev = es.eigenvalues().reverse();
    const Eigen::MatrixXd A = es.eigenvectors().rowwise().reverse();
    const auto k = Eigen::Index(n_components);
    lda.eigenvalues = ev.head(k);
    lda.basis.resize(dim, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const double lam = ev(i);
        lda.basis.col(i) = lam > 0 ? Eigen::VectorXd(Z * A.col(i) / std::sqrt(lam)) : Eigen::VectorXd(Z * A.col(i));
    }
    return lda;
}

// ---------------------------------------------------------------------------
// FFT and spectrogram

namespace detail {

inline std::mutex& fftw_planner_mutex() {
    static std::mutex mu;
    return mu;
}

// Real-to-complex plan with owned buffers; one per (thread, length).
class RealFft {
public:
    explicit RealFft(std::size_t n) : n_(n) {
        in_ = fftw_alloc_real(n);
        out_ = fftw_alloc_complex(n / 2 + 1);
        std::lock_guard lk(fftw_planner_mutex());
        plan_ = fftw_plan_dft_r2c_1d(int(n), in_, out_, FFTW_ESTIMATE);
    }
    ~RealFft() {
        std::lock_guard lk(fftw_planner_mutex());
        fftw_destroy_plan(plan_);
        fftw_free(in_);
        fftw_free(out_);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    double* input() noexcept { return in_; }
    const fftw_complex* output() const noexcept { return out_; }
    void execute() { fftw_execute(plan_); }
    std::size_t size() const noexcept { return n_; }

    static RealFft& cached(std::size_t n) {
        thread_local std::map<std::size_t, std::unique_ptr<RealFft>> plans;
        auto& slot = plans[n];
        if (!slot)
            slot = std::make_unique<RealFft>(n);
        return *slot;
    }

private:
    std::size_t n_;
    double* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan plan_ = nullptr;
};

} // namespace detail

// One-sided DFT X[k] = sum_t x[t] exp(-2 pi i k t / L), k = 0..L/2.
template <typename T>
std::vector<std::complex<double>> fft_spectrum(std::span<const T> x) {
    require(!x.empty(), "empty signal");
    auto& f = detail::RealFft::cached(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        f.input()[i] = double(x[i]);
    f.execute();
    std::vector<std::complex<double>> out(x.size() / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = {f.output()[k][0], f.output()[k][1]};
    return out;
}

// One-sided magnitude spectrum, length floor(L/2) + 1.
template <typename T>
std::vector<double> fft_features(std::span<const T> x) {
    auto spec = fft_spectrum(x);
    std::vector<double> mag(spec.size());
    for (std::size_t k = 0; k < spec.size(); ++k)
        mag[k] = std::abs(spec[k]);
    return mag;
}

inline std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(n));
    return w;
}

inline std::size_t spectrogram_frames(std::size_t length, std::size_t window_len, std::size_t hop) {
    return (length - window_len) / hop + 1;
}

// Hann-windowed STFT magnitudes, frames x (window_len/2 + 1), row-major.
template <typename T>
std::vector<double> spectrogram_features(std::span<const T> x, std::size_t window_len, std::size_t hop) {
    require(window_len >= 1 && window_len <= x.size(), "spectrogram window larger than the trace",
            "transform.window_len");
    require(hop >= 1, "hop must be >= 1", "transform.hop");
    const auto frames = spectrogram_frames(x.size(), window_len, hop);
    const auto bins = window_len / 2 + 1;
    const auto w = hann_window(window_len);
    auto& f = detail::RealFft::cached(window_len);
    std::vector<double> out(frames * bins);
    for (std::size_t fr = 0; fr < frames; ++fr) {
        for (std::size_t i = 0; i < window_len; ++i)
            f.input()[i] = double(x[fr * hop + i]) * w[i];
        f.execute();
        for (std::size_t k = 0; k < bins; ++k)
            out[fr * bins + k] = std::hypot(f.output()[k][0], f.output()[k][1]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fitted pipeline: transform -> standardize (traces arrive already averaged).

enum class TransformKind : std::uint8_t { Identity = 0, Pca = 1, Lda = 2, Fft = 3, Spectrogram = 4 };

inline std::string_view to_string(TransformKind k) {
    switch (k) {
    case TransformKind::Identity: return "identity";
    case TransformKind::Pca: return "pca";
    case TransformKind::Lda: return "lda";
    case TransformKind::Fft: return "fft";
    case TransformKind::Spectrogram: return "spectrogram";
    }
    return "?";
}

inline TransformKind transform_kind_from_string(std::string_view s) {
    for (auto k : {TransformKind::Identity, TransformKind::Pca, TransformKind::Lda, TransformKind::Fft,
                   TransformKind::Spectrogram})
        if (to_string(k) == s)
            return k;
    throw ValidationError("unknown transform kind '" + std::string(s) + "'", "transform.kind");
}

struct TransformSpec {
    TransformKind kind = TransformKind::Lda;
    std::size_t averaging_n = 20;
    std::size_t n_components = 10; // PCA default 250, LDA default 10
    std::size_t window_len = 256;
    std::size_t hop = 128;
    double lda_ridge = 1e-6;

    static std::size_t default_components(TransformKind k) { return k == TransformKind::Pca ? 250 : 10; }
};

class FeatureTransform {
public:
    static constexpr std::uint16_t kVersion = 1;

    // Fit on training traces only; the result is read-only afterwards.
    static FeatureTransform fit(const TransformSpec& spec, const TraceSet& train) {
        require(train.size() >= 2, "need at least 2 training traces");
        require(spec.averaging_n >= 1, "must be >= 1", "transform.averaging_n");
        for (const auto& t : train)
            if (t.n_averaged != spec.averaging_n)
                throw ValidationError("training trace averaged " + std::to_string(t.n_averaged) +
                                          "x but transform expects " + std::to_string(spec.averaging_n) + "x",
                                      "transform.averaging_n");
        FeatureTransform ft;
        ft.spec_ = spec;
        ft.length_ = train.trace_length();
        if (spec.kind == TransformKind::Spectrogram)
            require(spec.window_len <= ft.length_, "spectrogram window larger than the trace",
                    "transform.window_len");
        Eigen::MatrixXd base;
        if (spec.kind == TransformKind::Pca || spec.kind == TransformKind::Lda) {
            const Eigen::MatrixXd X = to_matrix(train);
            if (spec.kind == TransformKind::Pca) {
                auto p = fit_pca(X, spec.n_components);
                ft.mean_ = p.mean;
                ft.basis_ = p.basis;
                ft.eigenvalues_ = p.explained;
            } else {
                const auto labels = train.labels();
                auto l = fit_lda(X, labels, spec.n_components, spec.lda_ridge);
                ft.mean_ = l.mean;
                ft.basis_ = l.basis;
                ft.eigenvalues_ = l.eigenvalues;
            }
            base = (X.rowwise() - ft.mean_.transpose()) * ft.basis_;
        } else {
            base = ft.base_features(train);
        }
        ft.std_ = Standardizer::fit(base);
        ft.fingerprint_ = fnv1a(ft.serialize_body());
        return ft;
    }

    const TransformSpec& spec() const noexcept { return spec_; }
    std::size_t trace_length() const noexcept { return length_; }
    std::size_t output_dim() const noexcept { return std_.output_dim(); }
    std::uint64_t fingerprint() const noexcept { return fingerprint_; }
    const Standardizer& standardizer() const noexcept { return std_; }
    const Eigen::MatrixXd& basis() const noexcept { return basis_; }
    const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }

    // Features before standardization.
    Eigen::MatrixXd base_features(const TraceSet& set) const {
        require(set.trace_length() == length_, "trace length does not match the fitted transform");
        switch (spec_.kind) {
        case TransformKind::Identity: return to_matrix(set);
        case TransformKind::Pca:
        case TransformKind::Lda: return (to_matrix(set).rowwise() - mean_.transpose()) * basis_;
        case TransformKind::Fft:
        case TransformKind::Spectrogram: {
            Eigen::MatrixXd out;
            for (std::size_t i = 0; i < set.size(); ++i) {
                const auto f = spec_.kind == TransformKind::Fft
                                   ? fft_features(std::span<const float>(set[i].samples))
                                   : spectrogram_features(std::span<const float>(set[i].samples), spec_.window_len,
                                                          spec_.hop);
                if (i == 0)
                    out.resize(Eigen::Index(set.size()), Eigen::Index(f.size()));
                out.row(Eigen::Index(i)) = Eigen::Map<const Eigen::RowVectorXd>(f.data(), Eigen::Index(f.size()));
            }
            return out;
        }
        }
        return {};
    }

    // Standardized features, one row per trace. Never re-fits.
    Eigen::MatrixXd apply(const TraceSet& set) const { return std_.apply(base_features(set)); }

    Eigen::VectorXd apply(const Trace& t) const {
        TraceSet one(length_, LabelKind::KeyByte);
        one.push_back(t);
        return apply(one).row(0).transpose();
    }

    std::string serialize() const {
        ByteWriter w;
        w.put_bytes("XFT1");
        w.put<std::uint16_t>(kVersion);
        w.put_bytes(serialize_body());
        return w.take();
    }

    static FeatureTransform deserialize(std::string_view blob) {
        ByteReader r(blob);
        if (r.get_bytes(4) != "XFT1")
            throw ValidationError("not a feature transform blob (bad magic)");
        const auto version = r.get<std::uint16_t>();
        if (version != kVersion)
            throw ValidationError("unsupported feature transform version " + std::to_string(version));
        const auto body_start = r.position();
        FeatureTransform ft;
        ft.spec_.kind = static_cast<TransformKind>(r.get<std::uint8_t>());
        ft.spec_.averaging_n = r.get<std::uint64_t>();
        ft.spec_.n_components = r.get<std::uint64_t>();
        ft.spec_.window_len = r.get<std::uint64_t>();
        ft.spec_.hop = r.get<std::uint64_t>();
        ft.spec_.lda_ridge = r.get<double>();
        ft.length_ = r.get<std::uint64_t>();
        ft.mean_ = to_vec(r.get_doubles());
        const auto rows = r.get<std::uint64_t>();
        const auto cols = r.get<std::uint64_t>();
        const auto b = r.get_doubles();
        require(b.size() == rows * cols, "corrupt basis in transform blob");
        ft.basis_ = Eigen::Map<const Eigen::MatrixXd>(b.data(), Eigen::Index(rows), Eigen::Index(cols));
        ft.eigenvalues_ = to_vec(r.get_doubles());
        ft.std_.input_dim = r.get<std::uint64_t>();
        ft.std_.mean = to_vec(r.get_doubles());
        ft.std_.stddev = to_vec(r.get_doubles());
        ft.std_.kept = to_indices(r.get_doubles());
        ft.std_.dropped = to_indices(r.get_doubles());
        if (!r.done())
            throw ValidationError("trailing bytes in transform blob");
        ft.fingerprint_ = fnv1a(blob.substr(body_start));
        return ft;
    }

private:
    static Eigen::VectorXd to_vec(const std::vector<double>& v) {
        return Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
    }
    static std::vector<std::size_t> to_indices(const std::vector<double>& v) {
        return std::vector<std::size_t>(v.begin(), v.end());
    }
    static std::vector<double> from_indices(const std::vector<std::size_t>& v) {
        return std::vector<double>(v.begin(), v.end());
    }

    std::string serialize_body() const {
        ByteWriter w;
        w.put<std::uint8_t>(static_cast<std::uint8_t>(spec_.kind));
        w.put<std::uint64_t>(spec_.averaging_n);
        w.put<std::uint64_t>(spec_.n_components);
        w.put<std::uint64_t>(spec_.window_len);
        w.put<std::uint64_t>(spec_.hop);
        w.put<double>(spec_.lda_ridge);
        w.put<std::uint64_t>(length_);
        w.put_doubles(mean_.data(), std::size_t(mean_.size()));
        w.put<std::uint64_t>(std::uint64_t(basis_.rows()));
        w.put<std::uint64_t>(std::uint64_t(basis_.cols()));
        w.put_doubles(basis_.data(), std::size_t(basis_.size()));
        w.put_doubles(eigenvalues_.data(), std::size_t(eigenvalues_.size()));
        w.put<std::uint64_t>(std_.input_dim);
        w.put_doubles(std_.mean.data(), std::size_t(std_.mean.size()));
        w.put_doubles(std_.stddev.data(), std::size_t(std_.stddev.size()));
        const auto kept = from_indices(std_.kept);
        const auto dropped = from_indices(std_.dropped);
        w.put_doubles(kept.data(), kept.size());
        w.put_doubles(dropped.data(), dropped.size());
        return w.take();
    }

    TransformSpec spec_;
    std::size_t length_ = 0;
    Eigen::VectorXd mean_;
    Eigen::MatrixXd basis_;
    Eigen::VectorXd eigenvalues_;
    Standardizer std_;
    std::uint64_t fingerprint_ = 0;
};

} // namespace xdsca
