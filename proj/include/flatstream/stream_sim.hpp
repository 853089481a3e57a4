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
#include <iosfwd>
#include <string>
#include <vector>

#include "flatstream/dataset.hpp"
#include "flatstream/planner.hpp"
#include "flatstream/quantized_model.hpp"

namespace flatstream {

struct SimOptions {
  /// Extra cycles on the link after layer i (size 0 or layers - 1).
  std::vector<int> link_delays;
  /// Utilization window [begin, end); a negative end means "to the last cycle".
  std::int64_t window_begin = 0;
  std::int64_t window_end = -1;
  /// When false, only timing is modeled and outputs are left empty.
  bool compute_values = true;
  /// Keep every layer's output stream, not only the last one.
  bool capture_layers = false;
  /// Optional per-cycle CSV: cycle,layer,phase,active_units.
  std::ostream* trace = nullptr;
};

/// Unit-cycle accounting of one core. The four terms sum to units * cycles.
struct UnitCycles {
  std::int64_t active = 0;
  std::int64_t padding_idle = 0;  // window positions in the zero border
  std::int64_t partial_idle = 0;  // unused lanes of a short last channel block
  std::int64_t wait_idle = 0;     // engine idle: line-buffer fill or starvation
  std::int64_t busy_cycles = 0;

  std::int64_t total() const { return active + padding_idle + partial_idle + wait_idle; }
};

struct LayerSimStats {
  std::int64_t units = 0;
  UnitCycles run;
  UnitCycles window;
  std::int64_t blocked_emits = 0;
};

struct SimReport {
  std::int64_t cycles_total = 0;
  std::int64_t cycles_input_consume = 0;
  std::int64_t stall_count = 0;
  std::int64_t first_output_cycle = -1;
  /// Cycle of the last emitted block of each image.
  std::vector<std::int64_t> image_done_cycles;
  std::int64_t window_begin = 0;
  std::int64_t window_end = 0;
  std::vector<LayerSimStats> layers;

  /// Final-layer activation codes per image.
  std::vector<ActTensor> outputs;
  /// Final-layer pre-requantization values per image, at logit_point.
  std::vector<std::vector<std::int64_t>> logits;
  int logit_point = 5;
  /// Per image, per layer, when capture_layers is set.
  std::vector<std::vector<ActTensor>> layer_outputs;
};

/// Cycle-stepped simulation of the streaming pipeline with two-phase updates:
/// every decision reads start-of-cycle state, all effects commit at cycle end.
/// Throws PlanMismatch, ShapeMismatch, DeadlockDetected.
SimReport simulate(const QuantizedModel& model, const UnrollPlan& plan, const std::vector<ActTensor>& images,
                   const SimOptions& opts = {});

struct LayerUtilization {
  std::size_t layer = 0;
  std::string type;
  std::int64_t units = 0;
  double utilization = 0;
  double padding_idle = 0;
  double partial_idle = 0;
  double wait_idle = 0;
};

struct UtilizationSummary {
  /// Lanes of Conv, Conv dw and Conv pw cores only.
  double utilization = 0;
  /// Every core including pooling and FC.
  double utilization_all_layers = 0;
  std::int64_t cycles = 0;
  std::int64_t conv_units = 0;
  std::int64_t all_units = 0;
  std::string convention;
  std::vector<LayerUtilization> per_layer;
};

/// Uses the report's measurement window when `steady_state`, else the whole run.
UtilizationSummary measure_utilization(const NetworkSpec& net, const SimReport& report, bool steady_state = true);

std::string format_sim_report(const NetworkSpec& net, const SimReport& report, const UtilizationSummary& util,
                              double clock_mhz);

/// Frames per second for one image every `cycles_per_image` cycles.
double frames_per_second(std::int64_t cycles_per_image, double clock_mhz);

}  // namespace flatstream
