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
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "flatstream/cost_model.hpp"
#include "flatstream/planner.hpp"

namespace flatstream {

inline constexpr double kUnlimited = std::numeric_limits<double>::infinity();

/// Resource capacity of one device; latency is ignored.
inline CostReport unlimited_budget() { return CostReport{kUnlimited, kUnlimited, kUnlimited, kUnlimited, 0}; }

/// True when every resource field of `used` is within `budget`.
bool fits(const CostReport& used, const CostReport& budget);

struct DeviceSpan {
  std::size_t first_layer = 0;
  std::size_t end_layer = 0;  // exclusive
  CostReport cost;
};

struct PartitionPlan {
  std::vector<DeviceSpan> devices;
  /// Index of the last layer on each device except the final one.
  std::vector<std::size_t> cuts;
  /// Activation bits crossing each cut per transfer: U' * 8.
  std::vector<int> payload_bits;
  std::int64_t link_latency = 0;
  std::int64_t added_latency = 0;
};

/// First-fit in pipeline order. Throws Infeasible when a layer does not fit
/// an empty device or the devices run out.
PartitionPlan partition(const NetworkSpec& net, const UnrollPlan& plan, const std::vector<CostReport>& costs,
                        const std::vector<CostReport>& budgets, std::int64_t link_latency);

/// Budget file: one device per line, "luts regs bram_bits dsps"; "inf" allowed.
std::vector<CostReport> parse_budgets(std::string_view text);

/// Cycles for a link delay in milliseconds at a clock in MHz, rounded to nearest.
std::int64_t link_cycles(double milliseconds, double clock_mhz);

std::string format_partition(const NetworkSpec& net, const PartitionPlan& p);

}  // namespace flatstream
