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
#include <string>
#include <vector>

#include "flatstream/cost_model.hpp"
#include "flatstream/dataset.hpp"
#include "flatstream/finetune.hpp"
#include "flatstream/planner.hpp"

namespace flatstream {

enum class ChangeKind { kDecrement, kToggle };

std::string_view change_name(ChangeKind change);

struct Neighbor {
  std::size_t layer = 0;
  ChangeKind change = ChangeKind::kDecrement;
  QuantConfig q;
};

/// One-step changes of q restricted to the layers in `active`, ordered by
/// layer, decrement before toggle. Toggling keeps the bit-width.
std::vector<Neighbor> neighborhood(const QuantConfig& q, const std::vector<std::size_t>& active, int bit_floor = 3);

struct SearchConfig {
  double alpha_budget = 0.0;  // absolute top-1 threshold
  double h_budget = 0.0;      // cost-key threshold for early exit
  int epochs = 0;
  int bit_floor = 3;
  int bit_ceiling = 8;
  double learning_rate = 0.05;
  int batch_size = 16;
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct SearchStep {
  std::size_t layer = 0;
  ChangeKind change = ChangeKind::kDecrement;
  LayerQuant before;
  LayerQuant after;
  double alpha = 0.0;
  double cost_before = 0.0;
  double cost_after = 0.0;
  std::uint64_t seed = 0;
  bool accepted = false;
  /// Set when the candidate could not be evaluated, e.g. accumulator overflow risk.
  std::string note;
};

struct SearchTrace {
  double alpha_budget = 0.0;
  double h_budget = 0.0;
  double initial_cost = 0.0;
  std::vector<SearchStep> steps;
  bool early_exit = false;
};

struct SearchResult {
  QuantConfig q;
  std::vector<LayerParams> theta;
  SearchTrace trace;
  double cost = 0.0;
};

/// Seed used for the fine-tuning run of a given iteration.
std::uint64_t step_seed(std::uint64_t base, std::size_t iteration);

/// Greedy hybrid-quantization search. Each iteration takes the neighbor with
/// the largest strictly positive cost-key reduction, fine-tunes only that
/// candidate, accepts it when its accuracy reaches the budget and otherwise
/// retires the changed layer. Stops when no layer remains active, no
/// neighbor lowers the cost, or an accepted cost is within h_budget.
SearchResult search(const NetworkSpec& net, const std::vector<LayerParams>& theta, const QuantConfig& q0,
                    const SearchConfig& cfg, const Dataset& data, const UnrollPlan& plan,
                    const CostCoefficients& coeff);

std::string format_trace(const SearchTrace& trace);

/// Label such as "shift-3" or "fixed-8"; pooling layers read "none".
std::string quant_label(const LayerQuant& q);

}  // namespace flatstream
