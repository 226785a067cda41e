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

// Fully-connected 256-class classifier: dense -> ReLU -> batch-norm -> dropout
// per hidden layer, dense -> softmax output, Adam with plateau LR halving.

#include <xdsca/bytes.hpp>
#include <xdsca/error.hpp>
#include <xdsca/random.hpp>
#include <xdsca/trace.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace xdsca {

inline constexpr std::size_t kNumClasses = 256;
inline constexpr Eigen::Index kEvalRowBlock = 48;

enum class Mode { Train, Eval };

struct ForwardOptions {
    Mode mode = Mode::Eval;
    bool freeze_bn_stats = false;      // Train mode normalizes with running stats
    bool update_running_stats = true;  // Train mode only
    Rng* dropout_rng = nullptr;        // required when dropout is active
};

struct MlpConfig {
    std::vector<std::size_t> hidden = {100, 1024, 512};
    std::vector<double> dropout = {0.45, 0.20, 0.20};
    double bn_momentum = 0.99;
    double bn_eps = 1e-5;
};

template <typename T>
class Mlp {
public:
    using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

    struct Dense {
        Matrix W; // in x out
        Vector b;
    };
    struct BatchNorm {
        Vector gamma, beta;
        Vector running_mean, running_var;
    };

    struct Grads {
        std::vector<Dense> dense;
        std::vector<BatchNorm> bn; // only gamma/beta used
    };

    // Intermediate activations of one forward pass, kept for backprop.
    struct Cache {
        std::vector<Matrix> input;   // per dense layer
        std::vector<Matrix> pre;     // dense outputs of hidden layers
        std::vector<Matrix> xhat;    // normalized activations
        std::vector<Vector> inv_std;
        std::vector<Matrix> mask;    // scaled dropout masks (empty if none)
        bool batch_stats = false;
        Eigen::MatrixXd probs;
    };

    Mlp() = default;

    static Mlp init(std::size_t input_dim, std::uint64_t seed, const MlpConfig& cfg = {}) {
        require(input_dim >= 1, "input dimension must be >= 1");
        require(cfg.dropout.size() == cfg.hidden.size(), "one dropout rate per hidden layer", "model.dropout");
        for (double p : cfg.dropout)
            require(p >= 0.0 && p < 1.0, "dropout rates must lie in [0, 1)", "model.dropout");
        for (auto h : cfg.hidden)
            require(h >= 1, "hidden widths must be >= 1", "model.hidden");
        require(cfg.bn_momentum >= 0.0 && cfg.bn_momentum < 1.0, "must lie in [0, 1)", "model.bn_momentum");
        require(cfg.bn_eps > 0.0, "must be > 0", "model.bn_eps");
        Mlp m;
        m.cfg_ = cfg;
        m.dims_.push_back(input_dim);
        for (auto h : cfg.hidden)
            m.dims_.push_back(h);
        m.dims_.push_back(kNumClasses);
        auto rng = make_rng(seed, {stream::kInit});
        for (std::size_t l = 0; l + 1 < m.dims_.size(); ++l) {
            const auto in = Eigen::Index(m.dims_[l]), out = Eigen::Index(m.dims_[l + 1]);
            const double limit = std::sqrt(6.0 / double(in));
            std::uniform_real_distribution<double> U(-limit, limit);
            Dense d{Matrix(in, out), Vector::Zero(out)};
            for (Eigen::Index r = 0; r < in; ++r)
                for (Eigen::Index c = 0; c < out; ++c)
                    d.W(r, c) = T(U(rng));
            m.dense_.push_back(std::move(d));
            if (l + 2 < m.dims_.size())
                m.bn_.push_back({Vector::Ones(out), Vector::Zero(out), Vector::Zero(out), Vector::Ones(out)});
        }
        m.check();
        return m;
    }

    const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
    std::size_t input_dim() const noexcept { return dims_.front(); }
    const MlpConfig& config() const noexcept { return cfg_; }
    std::vector<Dense>& dense() noexcept { return dense_; }
    const std::vector<Dense>& dense() const noexcept { return dense_; }
    std::vector<BatchNorm>& batch_norm() noexcept { return bn_; }
    const std::vector<BatchNorm>& batch_norm() const noexcept { return bn_; }
    void set_dropout(std::vector<double> rates) {
        require(rates.size() == cfg_.dropout.size(), "one dropout rate per hidden layer", "model.dropout");
        cfg_.dropout = std::move(rates);
        check();
    }

    std::uint64_t transform_fingerprint = 0;
    LabelKind label_kind = LabelKind::KeyByte;

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& d : dense_)
            n += std::size_t(d.W.size() + d.b.size());
        for (const auto& b : bn_)
            n += std::size_t(b.gamma.size() + b.beta.size());
        return n;
    }

    void check() const {
        require(dims_.size() >= 2 && dims_.back() == kNumClasses, "output layer must have 256 units");
        require(dense_.size() == dims_.size() - 1 && bn_.size() == dense_.size() - 1, "inconsistent layers");
        for (const auto& b : bn_)
            require((b.running_var.array() > T(0)).all(), "batch-norm running variance must be > 0");
        for (double p : cfg_.dropout)
            require(p >= 0.0 && p < 1.0, "dropout rates must lie in [0, 1)", "model.dropout");
        const auto& W0 = dense_.front().W;
        const double mu = double(W0.mean());
        const double var = double((W0.array() - T(mu)).square().mean());
        require(var > 0.0, "first-layer weights have zero variance (uninitialized model)");
    }

    // Class probabilities, batch x 256, computed in double.
    Eigen::MatrixXd forward(const Matrix& X, const ForwardOptions& opt = {}, Cache* cache = nullptr) {
        require(std::size_t(X.cols()) == input_dim(),
                "feature dimension " + std::to_string(X.cols()) + " does not match model input " +
                    std::to_string(input_dim()));
        const bool train = opt.mode == Mode::Train;
        const bool batch_stats = train && !opt.freeze_bn_stats;
        // Eval batches are padded to whole GEMM register blocks so that a row's
        // output does not depend on its position or on the batch size.
        if (!train && !cache && X.rows() % kEvalRowBlock != 0) {
            const Eigen::Index n = X.rows();
            Matrix padded = Matrix::Zero((n / kEvalRowBlock + 1) * kEvalRowBlock, X.cols());
            padded.topRows(n) = X;
            return forward(padded, opt).topRows(n);
        }
        if (cache) {
            *cache = Cache{};
            cache->batch_stats = batch_stats;
        }
        Matrix h = X;
        const auto L = dense_.size();
        for (std::size_t l = 0; l + 1 < L; ++l) {
            if (cache)
                cache->input.push_back(h);
            Matrix z = (h * dense_[l].W).rowwise() + dense_[l].b;
            if (cache)
                cache->pre.push_back(z);
            Matrix a = z.cwiseMax(T(0));
            auto& bn = bn_[l];
            Vector mean, var;
            if (batch_stats) {
                mean = a.colwise().mean();
                var = (a.rowwise() - mean).array().square().colwise().mean();
                if (opt.update_running_stats) {
                    const T mom = T(cfg_.bn_momentum);
                    const double n = double(a.rows());
                    const T unbias = T(n > 1 ? n / (n - 1) : 1.0);
                    bn.running_mean = mom * bn.running_mean + (T(1) - mom) * mean;
                    bn.running_var = mom * bn.running_var + (T(1) - mom) * (var * unbias);
                }
            } else {
                mean = bn.running_mean;
                var = bn.running_var;
            }
            const Vector inv_std = (var.array() + T(cfg_.bn_eps)).rsqrt().matrix();
            Matrix xhat = ((a.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
            h = ((xhat.array().rowwise() * bn.gamma.array()).rowwise() + bn.beta.array()).matrix();
            Matrix mask;
            const double p = cfg_.dropout[l];
            if (train && p > 0.0) {
                require(opt.dropout_rng != nullptr, "dropout needs a random generator");
                auto& rng = *opt.dropout_rng;
                mask.resize(h.rows(), h.cols());
                const T keep = T(1.0 / (1.0 - p));
                for (Eigen::Index i = 0; i < mask.size(); ++i)
                    mask.data()[i] = double(rng() >> 11) * 0x1.0p-53 < p ? T(0) : keep;
                h.array() *= mask.array();
            }
            if (cache) {
                cache->xhat.push_back(std::move(xhat));
                cache->inv_std.push_back(inv_std);
                cache->mask.push_back(std::move(mask));
            }
        }
        if (cache)
            cache->input.push_back(h);
        const Matrix logits = (h * dense_.back().W).rowwise() + dense_.back().b;
        Eigen::MatrixXd probs = logits.template cast<double>();
        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
            auto row = probs.row(i);
            row.array() -= row.maxCoeff();
            row = row.array().exp().matrix();
            row /= row.sum();
        }
        if (cache)
            cache->probs = probs;
        return probs;
    }

    Eigen::MatrixXd predict(const Matrix& X, std::size_t chunk = 1024) {
        Eigen::MatrixXd out(X.rows(), Eigen::Index(kNumClasses));
        for (Eigen::Index s = 0; s < X.rows(); s += Eigen::Index(chunk)) {
            const auto n = std::min<Eigen::Index>(Eigen::Index(chunk), X.rows() - s);
            out.middleRows(s, n) = forward(X.middleRows(s, n));
        }
        return out;
    }

    // Mean cross-entropy of a forward pass already stored in cache.
    static double cross_entropy(const Eigen::MatrixXd& probs, std::span<const std::uint8_t> labels) {
        double loss = 0;
        for (std::size_t i = 0; i < labels.size(); ++i)
            loss -= std::log(std::max(probs(Eigen::Index(i), labels[i]), std::numeric_limits<double>::min()));
        return loss / double(labels.size());
    }

    Grads zero_grads() const {
        Grads g;
        for (const auto& d : dense_)
            g.dense.push_back({Matrix::Zero(d.W.rows(), d.W.cols()), Vector::Zero(d.b.size())});
        for (const auto& b : bn_)
            g.bn.push_back({Vector::Zero(b.gamma.size()), Vector::Zero(b.beta.size()), {}, {}});
        return g;
    }

    // Gradients of the mean cross-entropy given the cache of a forward pass.
    Grads backward(const Cache& cache, std::span<const std::uint8_t> labels) const {
        const auto B = Eigen::Index(labels.size());
        require(cache.probs.rows() == B, "label count does not match batch");
        Grads g = zero_grads();
        Eigen::MatrixXd dlog = cache.probs;
        for (Eigen::Index i = 0; i < B; ++i)
            dlog(i, labels[std::size_t(i)]) -= 1.0;
        dlog /= double(B);
        Matrix dz = dlog.cast<T>();
        const auto L = dense_.size();
        for (std::size_t l = L; l-- > 0;) {
            g.dense[l].W.noalias() = cache.input[l].transpose() * dz;
            g.dense[l].b = dz.colwise().sum();
            if (l == 0)
                break;
            Matrix dh = dz * dense_[l].W.transpose();
            const auto k = l - 1;
            if (cache.mask[k].size() > 0)
                dh.array() *= cache.mask[k].array();
            const auto& xhat = cache.xhat[k];
            g.bn[k].gamma = (dh.array() * xhat.array()).colwise().sum();
            g.bn[k].beta = dh.colwise().sum();
            Matrix dx = (dh.array().rowwise() * bn_[k].gamma.array()).matrix();
            Matrix da;
            if (cache.batch_stats) {
                const T n = T(dx.rows());
                const Vector sum_dx = dx.colwise().sum();
                const Vector sum_dx_xhat = (dx.array() * xhat.array()).colwise().sum();
                da = (((n * dx.array()).rowwise() - sum_dx.array()) - xhat.array().rowwise() * sum_dx_xhat.array())
                         .matrix();
                da = (da.array().rowwise() * (cache.inv_std[k].array() / n)).matrix();
            } else {
                da = (dx.array().rowwise() * cache.inv_std[k].array()).matrix();
            }
            dz = (da.array() * (cache.pre[k].array() > T(0)).template cast<T>()).matrix();
        }
        return g;
    }

    std::pair<double, Grads> loss_and_grads(const Matrix& X, std::span<const std::uint8_t> labels,
                                            const ForwardOptions& opt) {
        require(std::size_t(X.rows()) == labels.size(), "one label per input row required");
        Cache cache;
        forward(X, opt, &cache);
        const double loss = cross_entropy(cache.probs, labels);
        return {loss, backward(cache, labels)};
    }

    // Visits (parameter, gradient) tensor pairs in a fixed order.
    template <typename Fn>
    void for_each_param(Grads& g, Fn&& fn) {
        for (std::size_t l = 0; l < dense_.size(); ++l) {
            fn(dense_[l].W.data(), g.dense[l].W.data(), std::size_t(dense_[l].W.size()));
            fn(dense_[l].b.data(), g.dense[l].b.data(), std::size_t(dense_[l].b.size()));
        }
        for (std::size_t l = 0; l < bn_.size(); ++l) {
            fn(bn_[l].gamma.data(), g.bn[l].gamma.data(), std::size_t(bn_[l].gamma.size()));
            fn(bn_[l].beta.data(), g.bn[l].beta.data(), std::size_t(bn_[l].beta.size()));
        }
    }

    std::string serialize() const {
        ByteWriter w;
        w.put_bytes("XMLP");
        w.put<std::uint16_t>(kVersion);
        w.put<std::uint64_t>(transform_fingerprint);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(label_kind));
        w.put<double>(cfg_.bn_momentum);
        w.put<double>(cfg_.bn_eps);
        w.put_doubles(cfg_.dropout.data(), cfg_.dropout.size());
        w.put<std::uint32_t>(std::uint32_t(dims_.size()));
        for (auto d : dims_)
            w.put<std::uint64_t>(d);
        auto put = [&](const auto& m) {
            std::vector<double> v(std::size_t(m.size()));
            for (Eigen::Index i = 0; i < m.size(); ++i)
                v[std::size_t(i)] = double(m.data()[i]);
            w.put_doubles(v.data(), v.size());
        };
        for (const auto& d : dense_) {
            put(d.W);
            put(d.b);
        }
        for (const auto& b : bn_) {
            put(b.gamma);
            put(b.beta);
            put(b.running_mean);
            put(b.running_var);
        }
        return w.take();
    }

    static Mlp deserialize(std::string_view blob) {
        ByteReader r(blob);
        if (r.get_bytes(4) != "XMLP")
            throw ValidationError("not a model checkpoint (bad magic)");
        const auto version = r.get<std::uint16_t>();
        if (version != kVersion)
            throw ValidationError("unsupported model checkpoint version " + std::to_string(version));
        Mlp m;
        m.transform_fingerprint = r.get<std::uint64_t>();
        const auto lk = r.get<std::uint8_t>();
        if (lk > 1)
            throw ValidationError("corrupt label kind in model checkpoint");
        m.label_kind = static_cast<LabelKind>(lk);
        m.cfg_.bn_momentum = r.get<double>();
        m.cfg_.bn_eps = r.get<double>();
        m.cfg_.dropout = r.get_doubles();
        const auto nd = r.get<std::uint32_t>();
        if (nd < 2 || nd > 64)
            throw ValidationError("corrupt layer count in model checkpoint");
        for (std::uint32_t i = 0; i < nd; ++i)
            m.dims_.push_back(r.get<std::uint64_t>());
        m.cfg_.hidden.assign(m.dims_.begin() + 1, m.dims_.end() - 1);
        if (m.cfg_.dropout.size() != m.cfg_.hidden.size())
            throw ValidationError("corrupt dropout list in model checkpoint");
        auto get_into = [&](auto& m_, Eigen::Index rows, Eigen::Index cols) {
            const auto v = r.get_doubles();
            if (v.size() != std::size_t(rows * cols))
                throw ValidationError("corrupt tensor in model checkpoint");
            m_.resize(rows, cols);
            for (Eigen::Index i = 0; i < m_.size(); ++i)
                m_.data()[i] = T(v[std::size_t(i)]);
        };
        for (std::size_t l = 0; l + 1 < m.dims_.size(); ++l) {
            Dense d;
            get_into(d.W, Eigen::Index(m.dims_[l]), Eigen::Index(m.dims_[l + 1]));
            get_into(d.b, 1, Eigen::Index(m.dims_[l + 1]));
            m.dense_.push_back(std::move(d));
        }
        for (std::size_t l = 0; l + 2 < m.dims_.size(); ++l) {
            BatchNorm b;
            const auto w = Eigen::Index(m.dims_[l + 1]);
            get_into(b.gamma, 1, w);
            get_into(b.beta, 1, w);
            get_into(b.running_mean, 1, w);
            get_into(b.running_var, 1, w);
            m.bn_.push_back(std::move(b));
        }
        if (!r.done())
            throw ValidationError("trailing bytes in model checkpoint");
        m.check();
        return m;
    }

    static constexpr std::uint16_t kVersion = 1;

private:
    MlpConfig cfg_;
    std::vector<std::size_t> dims_;
    std::vector<Dense> dense_;
    std::vector<BatchNorm> bn_;
};

// ---------------------------------------------------------------------------
// Optimizer

template <typename T>
class Adam {
public:
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    // Call once per optimization step before updating the tensors.
    void begin_step() { ++t_; }
    long step_count() const noexcept { return t_; }

    void update(std::size_t slot, T* p, const T* g, std::size_t n, double lr) {
        if (slot >= m_.size()) {
            m_.resize(slot + 1);
            v_.resize(slot + 1);
        }
        if (m_[slot].empty()) {
            m_[slot].assign(n, T(0));
            v_[slot].assign(n, T(0));
        }
        require(m_[slot].size() == n, "optimizer state shape mismatch");
        const T b1 = T(beta1), b2 = T(beta2);
        const T c1 = T(1.0 / (1.0 - std::pow(beta1, double(t_))));
        const T c2 = T(1.0 / (1.0 - std::pow(beta2, double(t_))));
        const T step = T(lr), e = T(eps);
        T* m = m_[slot].data();
        T* v = v_[slot].data();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            p[i] -= step * (m[i] * c1) / (std::sqrt(v[i] * c2) + e);
        }
    }

    void step(Mlp<T>& model, typename Mlp<T>::Grads& grads, double lr) {
        begin_step();
        std::size_t slot = 0;
        model.for_each_param(grads, [&](T* p, T* g, std::size_t n) { update(slot++, p, g, n, lr); });
    }

private:
    long t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

// Halves the rate after `patience` epochs without a validation improvement.
class PlateauScheduler {
public:
    PlateauScheduler(double lr0, std::size_t patience, double factor)
        : lr_(lr0), patience_(patience), factor_(factor) {}

    // Returns true when the metric improved on the best seen so far.
    bool observe(double metric) {
        if (metric > best_) {
            best_ = metric;
            stale_ = 0;
            return true;
        }
        if (++stale_ >= patience_) {
            lr_ *= factor_;
            stale_ = 0;
        }
        return false;
    }

    double lr() const noexcept { return lr_; }

private:
    double lr_;
    std::size_t patience_;
    double factor_;
    double best_ = -std::numeric_limits<double>::infinity();
    std::size_t stale_ = 0;
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    double lr0 = 0.005;
    std::size_t plateau_patience = 5;
    double lr_factor = 0.5;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 100;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::size_t early_stop_patience = 15; // 0 disables
    std::uint64_t seed = 0;

    void validate() const {
        require(lr0 > 0.0 && std::isfinite(lr0), "must be > 0", "train.lr0");
        require(batch_size >= 1, "must be >= 1", "train.batch_size");
        require(max_epochs >= 1, "must be >= 1", "train.max_epochs");
        require(plateau_patience >= 1, "must be >= 1", "train.plateau_patience");
        require(lr_factor > 0.0 && lr_factor <= 1.0, "must lie in (0, 1]", "train.lr_factor");
        require(beta1 >= 0.0 && beta1 < 1.0, "must lie in [0, 1)", "train.adam_beta1");
        require(beta2 >= 0.0 && beta2 < 1.0, "must lie in [0, 1)", "train.adam_beta2");
        require(adam_eps > 0.0, "must be > 0", "train.adam_eps");
    }
};

struct TrainHistory {
    std::vector<double> train_loss, train_accuracy, val_accuracy, learning_rate;
    std::size_t best_epoch = 0; // 1-based
    double best_val_accuracy = 0;
    std::size_t epochs() const noexcept { return train_loss.size(); }
};

inline double accuracy_of(const Eigen::MatrixXd& probs, std::span<const std::uint8_t> labels) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        Eigen::Index arg;
        probs.row(Eigen::Index(i)).maxCoeff(&arg);
        hit += std::size_t(arg) == labels[i];
    }
    return labels.empty() ? 0.0 : double(hit) / double(labels.size());
}

template <typename T>
TrainHistory train_model(Mlp<T>& model, const typename Mlp<T>::Matrix& X, std::span<const std::uint8_t> y,
                   const typename Mlp<T>::Matrix& Xval, std::span<const std::uint8_t> yval, const TrainConfig& cfg,
                   const std::function<void(std::size_t, const TrainHistory&)>& on_epoch = {}) {
    cfg.validate();
    require(std::size_t(X.rows()) == y.size() && !y.empty(), "training set empty or label count mismatch");
    require(std::size_t(Xval.rows()) == yval.size() && !yval.empty(),
            "validation set empty or label count mismatch");
    Adam<T> opt;
    opt.beta1 = cfg.beta1;
    opt.beta2 = cfg.beta2;
    opt.eps = cfg.adam_eps;
    PlateauScheduler sched(cfg.lr0, cfg.plateau_patience, cfg.lr_factor);
    TrainHistory hist;
    Mlp<T> best = model;
    std::size_t since_best = 0;
    const auto n = std::size_t(X.rows());
    std::vector<std::size_t> order(n);
    typename Mlp<T>::Matrix xb;
    std::vector<std::uint8_t> yb;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto shuffle_rng = make_rng(cfg.seed, {stream::kShuffle, epoch});
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        auto drop_rng = make_rng(cfg.seed, {stream::kDropout, epoch});
        ForwardOptions fo{Mode::Train, false, true, &drop_rng};
        double loss_sum = 0;
        std::size_t hits = 0;
        const double lr = sched.lr();
        for (std::size_t s = 0; s < n; s += cfg.batch_size) {
            const auto bsz = std::min(cfg.batch_size, n - s);
            xb.resize(Eigen::Index(bsz), X.cols());
            yb.resize(bsz);
            for (std::size_t i = 0; i < bsz; ++i) {
                xb.row(Eigen::Index(i)) = X.row(Eigen::Index(order[s + i]));
                yb[i] = y[order[s + i]];
            }
            typename Mlp<T>::Cache cache;
            model.forward(xb, fo, &cache);
            const double loss = Mlp<T>::cross_entropy(cache.probs, yb);
            if (!std::isfinite(loss))
                throw RuntimeError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(s / cfg.batch_size + 1) + " (lr " + std::to_string(lr) + ")");
            loss_sum += loss * double(bsz);
            hits += std::size_t(std::llround(accuracy_of(cache.probs, yb) * double(bsz)));
            auto g = model.backward(cache, yb);
            opt.step(model, g, lr);
        }
        const double val_acc = accuracy_of(model.predict(Xval), yval);
        const bool improved = sched.observe(val_acc);
        hist.train_loss.push_back(loss_sum / double(n));
        hist.train_accuracy.push_back(double(hits) / double(n));
        hist.val_accuracy.push_back(val_acc);
        hist.learning_rate.push_back(sched.lr());
        if (improved) {
            best = model;
            hist.best_epoch = epoch;
            hist.best_val_accuracy = val_acc;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (on_epoch)
            on_epoch(epoch, hist);
        if (cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience)
            break;
    }
    model = std::move(best);
    return hist;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
    double accuracy = 0;
    double top5 = 0;
    std::size_t n = 0;
    std::vector<std::uint32_t> confusion; // 256 x 256, row = true label

    std::uint32_t count(std::size_t truth, std::size_t predicted) const {
        return confusion[truth * kNumClasses + predicted];
    }
    // Fraction of each present class classified correctly; NaN for absent classes.
    std::vector<double> per_class_recall() const {
        std::vector<double> out(kNumClasses, std::numeric_limits<double>::quiet_NaN());
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            std::uint64_t row = 0;
            for (std::size_t p = 0; p < kNumClasses; ++p)
                row += count(c, p);
            if (row > 0)
                out[c] = double(count(c, c)) / double(row);
        }
        return out;
    }
};

inline EvalResult evaluate_probs(const Eigen::MatrixXd& probs, std::span<const std::uint8_t> labels) {
    require(std::size_t(probs.rows()) == labels.size() && !labels.empty(), "evaluation needs labeled inputs");
    EvalResult r;
    r.n = labels.size();
    r.confusion.assign(kNumClasses * kNumClasses, 0);
    std::size_t top1 = 0, top5 = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto row = probs.row(Eigen::Index(i));
        Eigen::Index arg;
        row.maxCoeff(&arg);
        ++r.confusion[labels[i] * kNumClasses + std::size_t(arg)];
        top1 += std::size_t(arg) == labels[i];
        // Rank of the true class: entries strictly larger, ties resolved toward lower index.
        const double pt = row(labels[i]);
        std::size_t above = 0;
        for (Eigen::Index c = 0; c < row.size(); ++c)
            above += row(c) > pt || (row(c) == pt && c < Eigen::Index(labels[i]));
        top5 += above < 5;
    }
    r.accuracy = double(top1) / double(r.n);
    r.top5 = double(top5) / double(r.n);
    return r;
}

template <typename T>
EvalResult evaluate(Mlp<T>& model, const typename Mlp<T>::Matrix& X, std::span<const std::uint8_t> labels) {
    return evaluate_probs(model.predict(X), labels);
}

// Stratified hold-out: about `fraction` of each class goes to validation
// (at least one when the class has two or more members).
struct Split {
    std::vector<std::size_t> train, validation;
};

inline Split stratified_split(std::span<const std::uint8_t> labels, double fraction, std::uint64_t seed) {
    require(fraction > 0.0 && fraction < 1.0, "must lie in (0, 1)", "train.val_fraction");
    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i)
        by_class[labels[i]].push_back(i);
    Split s;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        auto& idx = by_class[c];
        if (idx.empty())
            continue;
        auto rng = make_rng(seed, {stream::kSplit, c});
        std::shuffle(idx.begin(), idx.end(), rng);
        std::size_t nv = std::size_t(std::llround(fraction * double(idx.size())));
        if (idx.size() >= 2)
            nv = std::clamp<std::size_t>(nv, 1, idx.size() - 1);
        else
            nv = 0;
        s.validation.insert(s.validation.end(), idx.begin(), idx.begin() + std::ptrdiff_t(nv));
        s.train.insert(s.train.end(), idx.begin() + std::ptrdiff_t(nv), idx.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.validation.begin(), s.validation.end());
    require(!s.validation.empty(), "validation split is empty; need at least 2 traces in some class");
    return s;
}

template <typename T>
typename Mlp<T>::Matrix rows_of(const Eigen::MatrixXd& X, std::span<const std::size_t> idx) {
    typename Mlp<T>::Matrix out(Eigen::Index(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        out.row(Eigen::Index(i)) = X.row(Eigen::Index(idx[i])).template cast<T>();
    return out;
}

} // namespace xdsca
