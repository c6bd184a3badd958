// Copyright 2026 The Concord Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
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

namespace concord {

enum class ErrorCode {
  // domain
  kDuplicateNodeId,
  kEmptyNonLeaf,
  kNonPositiveWeight,
  kInvalidValuation,
  // repository
  kDuplicateAgent,
  kUnknownAgent,
  kUnknownProduct,
  kDuplicateProduct,
  kZeroValidity,
  kDuplicateAdvertisement,
  kUnknownNegotiation,
  kRestoreError,
  // matcher
  kAlreadyQueued,
  // alliance
  kInternalDeadlock,
  // engine
  kPrecondition,
  kDuplicateStrategy,
  kUnknownStrategy,
  kStrategyLocked,
  kProtocol,
  // history
  kDuplicateRecord,
  kReplayMismatch,
  // harness
  kScenario,
  kIo,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDuplicateNodeId: return "DuplicateNodeId";
    case ErrorCode::kEmptyNonLeaf: return "EmptyNonLeaf";
    case ErrorCode::kNonPositiveWeight: return "NonPositiveWeight";
    case ErrorCode::kInvalidValuation: return "InvalidValuation";
    case ErrorCode::kDuplicateAgent: return "DuplicateAgent";
    case ErrorCode::kUnknownAgent: return "UnknownAgent";
    case ErrorCode::kUnknownProduct: return "UnknownProduct";
    case ErrorCode::kDuplicateProduct: return "DuplicateProduct";
    case ErrorCode::kZeroValidity: return "ZeroValidity";
    case ErrorCode::kDuplicateAdvertisement: return "DuplicateAdvertisement";
    case ErrorCode::kUnknownNegotiation: return "UnknownNegotiation";
    case ErrorCode::kRestoreError: return "RestoreError";
    case ErrorCode::kAlreadyQueued: return "AlreadyQueued";
    case ErrorCode::kInternalDeadlock: return "InternalDeadlock";
    case ErrorCode::kPrecondition: return "PreconditionViolation";
    case ErrorCode::kDuplicateStrategy: return "DuplicateStrategy";
    case ErrorCode::kUnknownStrategy: return "UnknownStrategy";
    case ErrorCode::kStrategyLocked: return "StrategyLocked";
    case ErrorCode::kProtocol: return "ProtocolError";
    case ErrorCode::kDuplicateRecord: return "DuplicateRecord";
    case ErrorCode::kReplayMismatch: return "ReplayMismatch";
    case ErrorCode::kScenario: return "ScenarioError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Thrown by history replay; carries the index of the first transcript
/// message that the engine did not reproduce.
class ReplayMismatch : public Error {
 public:
  ReplayMismatch(std::size_t index, const std::string& what)
      : Error(ErrorCode::kReplayMismatch,
              "at message " + std::to_string(index) + ": " + what),
        index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace concord
