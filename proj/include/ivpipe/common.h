// include/ivpipe/common.h

// Copyright 2026 The ivpipe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef IVPIPE_COMMON_H_
#define IVPIPE_COMMON_H_

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ivpipe {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Broad failure classes; the CLI maps them onto exit codes 2/3/4.
enum class ErrorKind { kConfig, kData, kNumerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string &what)
      : Error(ErrorKind::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string &what) : Error(ErrorKind::kData, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string &what)
      : Error(ErrorKind::kNumerical, what) {}
};

// Audio too short to hold a single analysis frame.
class TooShortError : public DataError {
 public:
  explicit TooShortError(const std::string &what) : DataError(what) {}
};

// An utterance (or statistics object) with no speech content.
class NoSpeechError : public DataError {
 public:
  explicit NoSpeechError(const std::string &what) : DataError(what) {}
};

// Warnings go to stderr unless silenced; a process-wide counter lets tests
// observe that a degenerate input was flagged.
void Warn(const std::string &msg);
std::uint64_t WarningCount();
void SetWarningsQuiet(bool quiet);

// FNV-1a, used for config hashes and model identifiers.
std::uint64_t Fnv1a(const void *data, std::size_t size,
                    std::uint64_t seed = 14695981039346656037ULL);
std::uint64_t Fnv1a(const std::string &s,
                    std::uint64_t seed = 14695981039346656037ULL);
std::string HexDigest(std::uint64_t h);

}  // namespace ivpipe

#endif  // IVPIPE_COMMON_H_
