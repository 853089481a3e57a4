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
#include <filesystem>
#include <map>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <tuple>

#include "flatstream/model_ir.hpp"
#include "flatstream/planner.hpp"

namespace flatstream {

struct CostReport {
  double luts = 0;
  double registers = 0;
  double bram_bits = 0;
  double dsps = 0;
  std::int64_t latency_cycles = 0;

  CostReport& operator+=(const CostReport& o);
  friend CostReport operator+(CostReport a, const CostReport& b) { return a += b; }
  friend bool operator==(const CostReport&, const CostReport&) = default;
};

/// a * w_act + b * n + c
struct LinearLutMap {
  double per_act_bit = 0;
  double per_weight_bit = 0;
  double constant = 0;

  double operator()(int act_bits, int weight_bits) const {
    return per_act_bit * act_bits + per_weight_bit * weight_bits + constant;
  }
  friend bool operator==(const LinearLutMap&, const LinearLutMap&) = default;
};

struct CostCoefficients {
  LinearLutMap lut_per_shiftadd{1, 1, 2};
  LinearLutMap lut_per_mac{1, 6, 4};
  double regs_per_unit = 12;
  double bram_bits_per_weight_bit = 1;
  double dsp_per_bn_multiplier = 1;
  /// Registers per activation bit held in the sliding-window buffer.
  double window_regs_per_bit = 1;

  // Weights of the scalar ordering key.
  double key_luts = 1;
  double key_registers = 0;
  double key_bram_bits = 0.01;
  double key_dsps = 50;
  double key_latency = 0;

  /// Throws InvalidArgument on negative coefficients or shift-add units
  /// costing more than multiply-accumulate units at equal width.
  void validate() const;
  friend bool operator==(const CostCoefficients&, const CostCoefficients&) = default;
};

/// Text form: one "name value" pair per line, '#' starts a comment.
/// Names not given keep their defaults.
CostCoefficients parse_coefficients(std::string_view text);
std::string format_coefficients(const CostCoefficients& coeff);
CostCoefficients load_coefficients(const std::filesystem::path& path);

/// Parallel lanes: U*C'*K^2, or U*K^2 for depthwise and pooling.
std::int64_t compute_units(const LayerSpec& layer, const LayerUnroll& unroll);

/// Activations held by the window buffer: (K-1) rows plus K pixels.
std::int64_t window_buffer_pixels(const LayerSpec& layer);

/// Cycles before the first output pixel can leave the core, plus one
/// pixel's compute and BN phases.
std::int64_t layer_latency(const LayerSpec& layer, const LayerUnroll& unroll);

CostReport estimate_layer(const LayerSpec& layer, const LayerQuant& quant, const LayerUnroll& unroll,
                          const CostCoefficients& coeff);

double cost_key(const CostReport& report, const CostCoefficients& coeff);

/// Memo of estimate_layer for a fixed coefficient table; concurrent
/// lookups are safe.
class CostCache {
 public:
  explicit CostCache(CostCoefficients coeff);

  const CostCoefficients& coefficients() const { return coeff_; }
  CostReport estimate(const LayerSpec& layer, const LayerQuant& quant, const LayerUnroll& unroll);
  std::size_t size() const;

 private:
  using Key = std::tuple<int, int, int, int, int, int, int, int, bool, int, int, int, int, int, int>;
  CostCoefficients coeff_;
  mutable std::shared_mutex mu_;
  std::map<Key, CostReport> memo_;
};

struct HwCost {
  CostReport total;
  std::vector<CostReport> per_layer;
  double key = 0;
};

HwCost hwcost(const NetworkSpec& net, const QuantConfig& q, const UnrollPlan& plan, const CostCoefficients& coeff,
              CostCache* cache = nullptr);

}  // namespace flatstream
