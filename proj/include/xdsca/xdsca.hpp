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

#include <xdsca/aes.hpp>
#include <xdsca/attack.hpp>
#include <xdsca/config.hpp>
#include <xdsca/devselect.hpp>
#include <xdsca/error.hpp>
#include <xdsca/io.hpp>
#include <xdsca/leakage.hpp>
#include <xdsca/mlp.hpp>
#include <xdsca/pipeline.hpp>
#include <xdsca/preprocess.hpp>
#include <xdsca/synth.hpp>
#include <xdsca/trace.hpp>
