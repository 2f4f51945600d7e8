// Copyright 2026 The nvpfi Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nvpfi {

// Invalid shapes, plans, sweep grids or CLI arguments. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A rate whose denominator would be empty (no correctly classified samples).
class MetricUndefined : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or truncated model/dataset files. Carries the byte offset (or
// line number for text formats) where decoding stopped.
class LoadError : public std::runtime_error {
 public:
  LoadError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace nvpfi
