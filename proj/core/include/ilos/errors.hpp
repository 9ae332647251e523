/*
 * Copyright 2026 The ILOS Forecast Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
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

namespace ilos {

// Base of every error raised by the toolkit. The CLI maps the subclasses to
// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. line() is 1-based; 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// An upstream pipeline artifact is absent.
class MissingArtifact : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or parameters during optimisation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Inputs that violate an operation precondition (shape mismatch, degenerate
// split, empty subset...).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace ilos
