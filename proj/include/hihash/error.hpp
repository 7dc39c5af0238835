// Copyright 2026 The hihash Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hihash {

enum class ErrorCode {
  // taxonomy
  NonMonotoneSigma,
  OrphanClass,
  BadCardinality,
  UnknownClass,
  InvalidPath,
  // encoder / shapes
  DimensionMismatch,
  BadDims,
  ShapeMismatch,
  // loss
  EmptyCenters,
  NonPositiveSigma,
  EmptyBatch,
  BadConfig,
  // trainer
  Diverged,
  // codes and search
  LengthMismatch,
  EmptyDatabase,
  ParityViolation,
  UnknownId,
  // metrics
  RankTooShort,
  // data and files
  ParseError,
  BadSpec,
  TooSmall,
  BadFormat,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonMonotoneSigma: return "NonMonotoneSigma";
    case ErrorCode::OrphanClass: return "OrphanClass";
    case ErrorCode::BadCardinality: return "BadCardinality";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::InvalidPath: return "InvalidPath";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BadDims: return "BadDims";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyCenters: return "EmptyCenters";
    case ErrorCode::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyDatabase: return "EmptyDatabase";
    case ErrorCode::ParityViolation: return "ParityViolation";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::RankTooShort: return "RankTooShort";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::BadFormat: return "BadFormat";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library. The code is the stable, testable part;
/// the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace hihash
