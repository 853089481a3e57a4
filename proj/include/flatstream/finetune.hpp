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

#include <cstdint>
#include <span>
#include <vector>

#include "flatstream/dataset.hpp"
#include "flatstream/golden_engine.hpp"
#include "flatstream/model_ir.hpp"

namespace flatstream {

struct FinetuneOptions {
  int epochs = 0;
  double learning_rate = 0.05;
  int batch_size = 16;
  std::uint64_t seed = 1;
  int jobs = 1;
  /// Replace every quantizer by the identity (gradient checks only).
  bool identity_quantizers = false;
};

struct FinetuneResult {
  std::vector<LayerParams> params;
  /// Accuracy of the quantized tuned model, from the integer engine.
  EvalResult alpha;
  double last_loss = 0.0;
};

/// Straight-through fine-tuning with plain minibatch SGD over the weights;
/// BN statistics stay frozen. epochs == 0 returns the input parameters
/// untouched. Throws NonFiniteLoss when the loss diverges.
FinetuneResult finetune_ste(const NetworkSpec& net, const std::vector<LayerParams>& theta, const QuantConfig& q,
                            const Dataset& data, const FinetuneOptions& opts);

struct LossGradient {
  double loss = 0.0;                              // mean cross-entropy
  std::vector<std::vector<double>> weight_grads;  // per layer, empty for pooling
};

/// Mean loss and its STE gradient over the samples named in `batch`.
LossGradient loss_and_gradient(const NetworkSpec& net, const std::vector<LayerParams>& theta, const QuantConfig& q,
                               const Dataset& data, std::span<const std::size_t> batch, bool identity_quantizers);

}  // namespace flatstream
