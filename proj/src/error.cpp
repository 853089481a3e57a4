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

#include "flatstream/error.hpp"

namespace flatstream {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMalformedDescriptor: return "MalformedDescriptor";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kBlobSizeMismatch: return "BlobSizeMismatch";
    case ErrorKind::kVersionMismatch: return "VersionMismatch";
    case ErrorKind::kCorruptChecksum: return "CorruptChecksum";
    case ErrorKind::kAllZeroWeights: return "AllZeroWeights";
    case ErrorKind::kNonPositiveSigma: return "NonPositiveSigma";
    case ErrorKind::kAccumulatorOverflowRisk: return "AccumulatorOverflowRisk";
    case ErrorKind::kEmptyDataset: return "EmptyDataset";
    case ErrorKind::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::kInfeasible: return "Infeasible";
    case ErrorKind::kPlanMismatch: return "PlanMismatch";
    case ErrorKind::kDeadlockDetected: return "DeadlockDetected";
    case ErrorKind::kOutputExists: return "OutputExists";
    case ErrorKind::kInconsistentInputs: return "InconsistentInputs";
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMalformedDescriptor:
    case ErrorKind::kShapeMismatch:
    case ErrorKind::kBlobSizeMismatch:
    case ErrorKind::kVersionMismatch:
    case ErrorKind::kCorruptChecksum:
      return 3;
    case ErrorKind::kAllZeroWeights:
    case ErrorKind::kNonPositiveSigma:
    case ErrorKind::kAccumulatorOverflowRisk:
    case ErrorKind::kNonFiniteLoss:
    case ErrorKind::kEmptyDataset:
      return 4;
    case ErrorKind::kInfeasible:
    case ErrorKind::kPlanMismatch:
    case ErrorKind::kInconsistentInputs:
      return 5;
    case ErrorKind::kDeadlockDetected:
      return 6;
    case ErrorKind::kOutputExists:
    case ErrorKind::kIo:
      return 7;
    case ErrorKind::kInvalidArgument:
      return 2;
  }
  return 1;
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
      kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace flatstream
