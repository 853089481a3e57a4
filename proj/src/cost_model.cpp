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

#include "flatstream/cost_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <mutex>
#include <sstream>
#include <vector>

#include "flatstream/error.hpp"
#include "flatstream/quantizer.hpp"

namespace flatstream {

CostReport& CostReport::operator+=(const CostReport& o) {
  luts += o.luts;
  registers += o.registers;
  bram_bits += o.bram_bits;
  dsps += o.dsps;
  latency_cycles += o.latency_cycles;
  return *this;
}

namespace {

struct Field {
  const char* name;
  std::function<double&(CostCoefficients&)> ref;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      {"lut_per_shiftadd.act_bit", [](CostCoefficients& c) -> double& { return c.lut_per_shiftadd.per_act_bit; }},
      {"lut_per_shiftadd.weight_bit", [](CostCoefficients& c) -> double& { return c.lut_per_shiftadd.per_weight_bit; }},
      {"lut_per_shiftadd.constant", [](CostCoefficients& c) -> double& { return c.lut_per_shiftadd.constant; }},
      {"lut_per_mac.act_bit", [](CostCoefficients& c) -> double& { return c.lut_per_mac.per_act_bit; }},
      {"lut_per_mac.weight_bit", [](CostCoefficients& c) -> double& { return c.lut_per_mac.per_weight_bit; }},
      {"lut_per_mac.constant", [](CostCoefficients& c) -> double& { return c.lut_per_mac.constant; }},
      {"regs_per_unit", [](CostCoefficients& c) -> double& { return c.regs_per_unit; }},
      {"bram_bits_per_weight_bit", [](CostCoefficients& c) -> double& { return c.bram_bits_per_weight_bit; }},
      {"dsp_per_bn_multiplier", [](CostCoefficients& c) -> double& { return c.dsp_per_bn_multiplier; }},
      {"window_regs_per_bit", [](CostCoefficients& c) -> double& { return c.window_regs_per_bit; }},
      {"key.luts", [](CostCoefficients& c) -> double& { return c.key_luts; }},
      {"key.registers", [](CostCoefficients& c) -> double& { return c.key_registers; }},
      {"key.bram_bits", [](CostCoefficients& c) -> double& { return c.key_bram_bits; }},
      {"key.dsps", [](CostCoefficients& c) -> double& { return c.key_dsps; }},
      {"key.latency", [](CostCoefficients& c) -> double& { return c.key_latency; }},
  };
  return kFields;
}

}  // namespace

void CostCoefficients::validate() const {
  CostCoefficients copy = *this;
  for (const Field& f : fields()) {
    const double v = f.ref(copy);
    if (!std::isfinite(v) || v < 0) fail(ErrorKind::kInvalidArgument, std::string("coefficient ") + f.name + " must be >= 0");
  }
  for (int n = 0; n <= 16; ++n) {
    if (lut_per_shiftadd(kActivationBits, n) > lut_per_mac(kActivationBits, n)) {
      fail(ErrorKind::kInvalidArgument, "shift-add LUT cost exceeds multiply-accumulate cost at n=" + std::to_string(n));
    }
  }
}

CostCoefficients parse_coefficients(std::string_view text) {
  CostCoefficients c;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string name, value, extra;
    if (!(ls >> name)) continue;
    if (!(ls >> value) || (ls >> extra)) {
      fail(ErrorKind::kMalformedDescriptor, "coefficient line " + std::to_string(lineno) + ": expected 'name value'");
    }
    const auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) { return name == f.name; });
    if (it == fields().end()) fail(ErrorKind::kMalformedDescriptor, "unknown coefficient '" + name + "'");
    double v = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      fail(ErrorKind::kMalformedDescriptor, "coefficient '" + name + "' has a non-numeric value");
    }
    it->ref(c) = v;
  }
  c.validate();
  return c;
}

std::string format_coefficients(const CostCoefficients& coeff) {
  CostCoefficients copy = coeff;
  std::ostringstream os;
  os.precision(17);
  for (const Field& f : fields()) os << f.name << " " << f.ref(copy) << "\n";
  return os.str();
}

CostCoefficients load_coefficients(const std::filesystem::path& path) { return parse_coefficients(read_file(path)); }

std::int64_t compute_units(const LayerSpec& l, const LayerUnroll& u) {
  const std::int64_t k2 = static_cast<std::int64_t>(l.kernel) * l.kernel;
  if (l.is_channelwise()) return u.unroll_in * k2;
  return static_cast<std::int64_t>(u.unroll_in) * l.out_channels * k2;
}

std::int64_t window_buffer_pixels(const LayerSpec& l) {
  return static_cast<std::int64_t>(l.kernel - 1) * l.in_width + l.kernel;
}

std::int64_t layer_latency(const LayerSpec& l, const LayerUnroll& u) {
  const std::int64_t fill_pixels = static_cast<std::int64_t>(std::max(0, l.kernel - 1 - l.padding)) * (l.in_width + 1);
  return u.t_in * fill_pixels + input_phases(l, u) + output_phases(l, u);
}

CostReport estimate_layer(const LayerSpec& l, const LayerQuant& quant, const LayerUnroll& u,
                          const CostCoefficients& coeff) {
  CostReport r;
  const auto units = static_cast<double>(compute_units(l, u));
  if (l.has_weights()) {
    const LinearLutMap& lut = quant.arith == Arith::kShift ? coeff.lut_per_shiftadd : coeff.lut_per_mac;
    r.luts = units * lut(kActivationBits, quant.bits);
    r.bram_bits = static_cast<double>(l.weight_count()) * quant.bits * coeff.bram_bits_per_weight_bit;
  } else {
    r.luts = units * coeff.lut_per_shiftadd(kActivationBits, 0);
  }
  if (l.has_bn) {
    r.bram_bits += 2.0 * l.out_channels * 16 * coeff.bram_bits_per_weight_bit;
    r.dsps = u.unroll_out * coeff.dsp_per_bn_multiplier;
  }
  r.registers = units * coeff.regs_per_unit +
                static_cast<double>(window_buffer_pixels(l)) * kActivationBits * u.unroll_in * coeff.window_regs_per_bit;
  r.latency_cycles = layer_latency(l, u);
  return r;
}

double cost_key(const CostReport& r, const CostCoefficients& c) {
  return r.luts * c.key_luts + r.registers * c.key_registers + r.bram_bits * c.key_bram_bits + r.dsps * c.key_dsps +
         static_cast<double>(r.latency_cycles) * c.key_latency;
}

CostCache::CostCache(CostCoefficients coeff) : coeff_(std::move(coeff)) {}

CostReport CostCache::estimate(const LayerSpec& l, const LayerQuant& q, const LayerUnroll& u) {
  const Key key{static_cast<int>(l.kind), l.kernel, l.stride, l.in_channels, l.out_channels, l.in_height,
                l.in_width, l.padding, l.has_bn, static_cast<int>(q.arith), q.bits, u.unroll_in, u.unroll_out,
                u.t_in, u.t_out};
  {
    std::shared_lock lock(mu_);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  }
  const CostReport r = estimate_layer(l, q, u, coeff_);
  std::unique_lock lock(mu_);
  memo_.emplace(key, r);
  return r;
}

std::size_t CostCache::size() const {
  std::shared_lock lock(mu_);
  return memo_.size();
}

HwCost hwcost(const NetworkSpec& net, const QuantConfig& q, const UnrollPlan& plan, const CostCoefficients& coeff,
              CostCache* cache) {
  if (q.size() != net.layers.size()) fail(ErrorKind::kInconsistentInputs, "quant config does not cover every layer");
  if (plan.layers.size() != net.layers.size()) fail(ErrorKind::kPlanMismatch, "plan does not cover every layer");
  HwCost h;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const CostReport r = cache ? cache->estimate(net.layers[i], q[i], plan.layers[i])
                               : estimate_layer(net.layers[i], q[i], plan.layers[i], coeff);
    h.per_layer.push_back(r);
    h.total += r;
  }
  h.key = cost_key(h.total, cache ? cache->coefficients() : coeff);
  return h;
}

}  // namespace flatstream
