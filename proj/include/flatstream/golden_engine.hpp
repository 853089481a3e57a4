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
#include <vector>

#include "flatstream/dataset.hpp"
#include "flatstream/quantized_model.hpp"

namespace flatstream {

/// Integer view of one layer's arithmetic.
///
/// Every weight becomes an integer multiplier at a common accumulator point
/// F. Fixed layers use the mantissa and F = 5 + p. Shift layers use
/// +-2^(e - e_lo), where e_lo is the smallest exponent present, giving
/// F = 5 + b - e_lo. After BN the value sits at point G = max(F + 8, 8);
/// without BN, G = F.
struct LayerDatapath {
  std::vector<std::int32_t> multipliers;  // OIHW, empty for pooling
  std::vector<ShiftTerm> shift_terms;     // populated for shift layers only
  int exponent_floor = 0;                 // e_lo
  int acc_point = kActivationFracBits;    // F
  int out_point = kActivationFracBits;    // G
  std::int64_t max_abs_multiplier = 0;
};

/// Throws AccumulatorOverflowRisk unless fan_in * 255 * max|m| < 2^31.
LayerDatapath build_datapath(const LayerSpec& layer, const QuantizedLayer& ql);

/// round(num / den) with ties away from zero; den > 0.
std::int64_t round_div(std::int64_t num, std::int64_t den);

/// Post-accumulation stage for one output channel: fused BN (or the pooling
/// division) yielding a value at point `dp.out_point`.
std::int64_t finish_channel(const LayerSpec& layer, const LayerDatapath& dp, const QuantizedLayer& ql,
                            int channel, std::int32_t acc);

struct ForwardResult {
  std::vector<ActTensor> layer_outputs;
  /// Last layer's pre-requantization values, HWC-flattened, at logit_point.
  std::vector<std::int64_t> logits;
  int logit_point = kActivationFracBits;
};

class GoldenEngine {
 public:
  explicit GoldenEngine(QuantizedModel model);

  const QuantizedModel& model() const { return model_; }
  const std::vector<LayerDatapath>& datapaths() const { return datapaths_; }

  ForwardResult run(const ActTensor& image) const;
  /// Only the final layer's logits, skipping retained intermediates.
  std::vector<std::int64_t> logits(const ActTensor& image) const;

 private:
  ActTensor run_layer(std::size_t index, const ActTensor& in, std::vector<std::int64_t>* pre_requant) const;

  QuantizedModel model_;
  std::vector<LayerDatapath> datapaths_;
};

ForwardResult forward_quant(const QuantizedModel& model, const ActTensor& image);

struct EvalResult {
  double top1 = 0.0;
  double top5 = 0.0;
  std::size_t sample_count = 0;
  friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

/// Rank of `label` among logits; ties rank the lower class index first.
std::size_t label_rank(const std::vector<std::int64_t>& logits, std::size_t label);

/// Deterministic for any jobs value. Throws EmptyDataset.
EvalResult evaluate(const QuantizedModel& model, const Dataset& data, int jobs = 1);

}  // namespace flatstream
