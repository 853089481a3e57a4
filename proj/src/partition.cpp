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

#include "flatstream/partition.hpp"

#include <cmath>
#include <sstream>

#include "flatstream/error.hpp"
#include "flatstream/quantizer.hpp"

namespace flatstream {

bool fits(const CostReport& used, const CostReport& budget) {
  return used.luts <= budget.luts && used.registers <= budget.registers && used.bram_bits <= budget.bram_bits &&
         used.dsps <= budget.dsps;
}

PartitionPlan partition(const NetworkSpec& net, const UnrollPlan& plan, const std::vector<CostReport>& costs,
                        const std::vector<CostReport>& budgets, std::int64_t link_latency) {
  check_plan(net, plan);
  if (costs.size() != net.layers.size()) fail(ErrorKind::kInconsistentInputs, "one cost report per layer required");
  if (budgets.empty()) fail(ErrorKind::kInfeasible, "no devices given");
  if (link_latency < 0) fail(ErrorKind::kInvalidArgument, "link latency must be nonnegative");
  PartitionPlan p;
  p.link_latency = link_latency;
  std::size_t device = 0;
  DeviceSpan cur;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (!fits(cur.cost + costs[i], budgets[device])) {
      if (cur.end_layer == cur.first_layer) {
        fail(ErrorKind::kInfeasible, "layer " + std::to_string(i) + " exceeds the budget of device " +
                                         std::to_string(device) + " on its own");
      }
      p.devices.push_back(cur);
      p.cuts.push_back(i - 1);
      p.payload_bits.push_back(plan.layers[i - 1].unroll_out * kActivationBits);
      if (++device == budgets.size()) {
        fail(ErrorKind::kInfeasible, "devices exhausted before layer " + std::to_string(i));
      }
      cur = DeviceSpan{i, i, CostReport{}};
      if (!fits(costs[i], budgets[device])) {
        fail(ErrorKind::kInfeasible, "layer " + std::to_string(i) + " exceeds the budget of device " +
                                         std::to_string(device) + " on its own");
      }
    }
    cur.cost += costs[i];
    cur.end_layer = i + 1;
  }
  p.devices.push_back(cur);
  p.added_latency = static_cast<std::int64_t>(p.devices.size() - 1) * link_latency;
  return p;
}

std::vector<CostReport> parse_budgets(std::string_view text) {
  std::vector<CostReport> out;
  std::istringstream in{std::string(text)};
  std::string line;
  auto value = [](const std::string& s) {
    if (s == "inf") return kUnlimited;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || v < 0) fail(ErrorKind::kMalformedDescriptor, "bad budget value '" + s + "'");
    return v;
  };
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> cells;
    for (std::string c; ls >> c;) cells.push_back(c);
    if (cells.empty()) continue;
    if (cells.size() != 4) fail(ErrorKind::kMalformedDescriptor, "budget line needs 'luts regs bram_bits dsps'");
    out.push_back(CostReport{value(cells[0]), value(cells[1]), value(cells[2]), value(cells[3]), 0});
  }
  return out;
}

std::int64_t link_cycles(double milliseconds, double clock_mhz) {
  return std::llround(milliseconds * 1e-3 * clock_mhz * 1e6);
}

std::string format_partition(const NetworkSpec& net, const PartitionPlan& p) {
  std::ostringstream os;
  os << "devices " << p.devices.size() << "\n";
  for (std::size_t d = 0; d < p.devices.size(); ++d) {
    const DeviceSpan& s = p.devices[d];
    os << "device " << d << " layers " << s.first_layer << ".." << (s.end_layer - 1) << " luts "
       << std::llround(s.cost.luts) << " regs " << std::llround(s.cost.registers) << " bram_bits "
       << std::llround(s.cost.bram_bits) << " dsps " << std::llround(s.cost.dsps) << "\n";
  }
  for (std::size_t c = 0; c < p.cuts.size(); ++c) {
    os << "cut after layer " << p.cuts[c] << " (" << layer_type_label(net.layers[p.cuts[c]]) << ") payload_bits "
       << p.payload_bits[c] << "\n";
  }
  os << "link_latency " << p.link_latency << "\n";
  os << "added_latency " << p.added_latency << "\n";
  return os.str();
}

}  // namespace flatstream
