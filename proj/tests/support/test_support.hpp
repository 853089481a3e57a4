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
#include <string>
#include <vector>

#include "flatstream/cost_model.hpp"
#include "flatstream/dataset.hpp"
#include "flatstream/model_ir.hpp"
#include "flatstream/planner.hpp"
#include "flatstream/quantized_model.hpp"
#include "flatstream/quantizer.hpp"

namespace flatstream::testing {

std::filesystem::path source_path(const std::string& relative);
NetworkSpec load_fixture_net(const std::string& name);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& tag);

// Desk-scale network with a random per-layer quant config whose datapath passes
// the accumulator certificate. Deterministic in seed.
struct RandomNet {
  NetworkSpec net;
  std::vector<LayerParams> params;
  QuantizedModel model;
  UnrollPlan plan;
};
RandomNet random_network(std::uint64_t seed);

// Reference inference in double precision. Every intermediate value is a dyadic
// rational well inside the 53-bit mantissa, so the result is exact.
struct OracleForward {
  std::vector<std::vector<std::uint8_t>> codes;  // per layer, HWC
  std::vector<double> logits;                    // last layer, before requantization
};
OracleForward dyadic_reference(const QuantizedModel& model, const ActTensor& image);
double oracle_decode(std::uint32_t code, const QuantizedLayer& layer);

// Smallest |decode(c) - w| over every valid codeword.
double nearest_distance(double w, const WeightFormat& fmt);

std::string pack_bits_oracle(const std::vector<std::uint32_t>& codes, int bits);

double finite_difference(const NetworkSpec& net, std::vector<LayerParams> theta, const QuantConfig& q,
                         const Dataset& data, const std::vector<std::size_t>& batch, std::size_t layer,
                         std::size_t index, double h);

// Minimum cost key over every configuration reachable through decrement and toggle moves.
double exhaustive_min_key(const NetworkSpec& net, const QuantConfig& q0, const UnrollPlan& plan,
                          const CostCoefficients& coeff, int bit_floor);

// True when no layer emits more outputs than its input rate budgets for:
// out_h * S <= in_h and out_w * S <= in_w everywhere.
bool rate_conserving(const NetworkSpec& net);

// Cycles to admit n images at one pixel every D cycles.
std::int64_t token_rate_consume(const NetworkSpec& net, const Ipp& ipp, std::size_t n);

}  // namespace flatstream::testing
