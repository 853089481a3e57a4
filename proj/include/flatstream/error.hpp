// Copyright 2026 The flatstream Authors
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

namespace flatstream {

enum class ErrorKind {
  kMalformedDescriptor,
  kShapeMismatch,
  kBlobSizeMismatch,
  kVersionMismatch,
  kCorruptChecksum,
  kAllZeroWeights,
  kNonPositiveSigma,
  kAccumulatorOverflowRisk,
  kEmptyDataset,
  kNonFiniteLoss,
  kInfeasible,
  kPlanMismatch,
  kDeadlockDetected,
  kOutputExists,
  kInconsistentInputs,
  kIo,
  kInvalidArgument,
};

std::string_view error_kind_name(ErrorKind kind);

/// Process exit code used by the command line tool for each error class.
int exit_code_for(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace flatstream
