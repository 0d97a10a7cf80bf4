/*
 * Copyright 2026 The fedadmm-sim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedadmm {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration: unknown key, wrong type, violated constraint, or a
// dimension mismatch between an objective and the vectors handed to it.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Theorem hyperparameter preconditions (rho vs. (1+sqrt 5) L).
class InvalidHyperparameter : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// A loss or gradient evaluated to a non-finite value.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t sample)
      : Error(what + " (sample " + std::to_string(sample) + ")"), sample_(sample) {}

  std::size_t sample() const noexcept { return sample_; }

 private:
  std::size_t sample_;
};

// A local solver produced a non-finite iterate.
class DivergenceError : public Error {
 public:
  DivergenceError(int client, int epoch)
      : Error("local solve diverged on client " + std::to_string(client) + " at epoch " +
              std::to_string(epoch)),
        client_(client),
        epoch_(epoch) {}

  int client() const noexcept { return client_; }
  int epoch() const noexcept { return epoch_; }

 private:
  int client_;
  int epoch_;
};

class IoError : public Error {
 public:
  IoError(const std::string& what, std::string path) : Error(what + ": " + path), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Malformed dataset file. `offset` is the byte position where parsing failed.
class ParseError : public Error {
 public:
  enum class Kind { BadMagic, Truncated, CountMismatch, BadLength, Corrupt };

  ParseError(Kind kind, std::size_t offset, const std::string& what)
      : Error(what + " at byte offset " + std::to_string(offset)), kind_(kind), offset_(offset) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

}  // namespace fedadmm
