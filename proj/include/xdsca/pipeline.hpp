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

// Glue for the profiling workflow: fit the feature transform and classifier on
// training devices, then score held-out devices.

#include <xdsca/attack.hpp>
#include <xdsca/mlp.hpp>
#include <xdsca/preprocess.hpp>
#include <xdsca/trace.hpp>

#include <chrono>
#include <span>
#include <vector>

namespace xdsca {

using Model = Mlp<float>;

struct TrainedPipeline {
    FeatureTransform transform;
    Model model;
    TrainHistory history;
    double fit_seconds = 0;   // transform fit + feature extraction
    double train_seconds = 0; // classifier training
};

// Splits off a stratified validation set, fits the transform on the remaining
// training traces only, and trains the classifier.
inline TrainedPipeline fit_pipeline(const TraceSet& train, const TransformSpec& spec, const MlpConfig& mlp,
                                    const TrainConfig& tc, double val_fraction = 0.1) {
    using clock = std::chrono::steady_clock;
    const auto labels = train.labels();
    const auto split = stratified_split(labels, val_fraction, tc.seed);
    const auto tr = train.select(split.train);
    const auto va = train.select(split.validation);

    TrainedPipeline p;
    const auto t0 = clock::now();
    p.transform = FeatureTransform::fit(spec, tr);
    const Model::Matrix Xtr = p.transform.apply(tr).cast<float>();
    const Model::Matrix Xva = p.transform.apply(va).cast<float>();
    const auto t1 = clock::now();
    p.model = Model::init(p.transform.output_dim(), tc.seed, mlp);
    p.model.transform_fingerprint = p.transform.fingerprint();
    p.model.label_kind = train.label_kind();
    const auto ytr = tr.labels();
    const auto yva = va.labels();
    p.history = train_model(p.model, Xtr, ytr, Xva, yva, tc);
    const auto t2 = clock::now();
    p.fit_seconds = std::chrono::duration<double>(t1 - t0).count();
    p.train_seconds = std::chrono::duration<double>(t2 - t1).count();
    return p;
}

struct CrossDeviceResult {
    std::vector<std::uint32_t> devices;
    std::vector<double> accuracy;
    double mean_accuracy = 0;
};

inline CrossDeviceResult evaluate_devices(Model& model, const FeatureTransform& ft,
                                          std::span<const TraceSet> per_device) {
    CrossDeviceResult r;
    for (const auto& set : per_device) {
        require(!set.empty(), "empty test device");
        const auto probs = predict_probs(model, ft, set);
        const auto labels = set.with_label_kind(model.label_kind).labels();
        r.devices.push_back(set[0].device_id);
        r.accuracy.push_back(evaluate_probs(probs, labels).accuracy);
    }
    double s = 0;
    for (double a : r.accuracy)
        s += a;
    r.mean_accuracy = r.accuracy.empty() ? 0.0 : s / double(r.accuracy.size());
    return r;
}

} // namespace xdsca
