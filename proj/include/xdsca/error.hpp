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

#include <stdexcept>
#include <string>

namespace xdsca {

// Bad input or configuration. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what, std::string key = {})
        : std::invalid_argument(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}

    // Offending configuration key, empty when not tied to one.
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

// Failure while running a stage (I/O, divergence, ...). Exit code 1.
class RuntimeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what, const std::string& key = {}) {
    if (!cond)
        throw ValidationError(what, key);
}

} // namespace xdsca
