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
#include <string_view>
#include <vector>

#include "flatstream/planner.hpp"
#include "flatstream/quantized_model.hpp"

namespace flatstream {

struct PortWidths {
  int act_in = 0;      // U * 8
  int act_out = 0;     // U' * 8
  int weight_bus = 0;  // U*C'*K^2*n, U*K^2*n for depthwise, 0 for pooling
  friend bool operator==(const PortWidths&, const PortWidths&) = default;
};

PortWidths port_widths(const LayerSpec& layer, const LayerUnroll& unroll, const LayerQuant& quant);

struct RtlFile {
  std::string name;
  std::string contents;
};

/// File tree in write order; the manifest is always last.
struct RtlArtifact {
  std::vector<RtlFile> files;
};

/// Pure rendering, no filesystem access. Throws InconsistentInputs.
RtlArtifact render_rtl(const QuantizedModel& model, const UnrollPlan& plan);

/// Writes the tree into out_dir. Throws OutputExists when out_dir already
/// holds files and `force` is false; with `force`, previously emitted files
/// are replaced.
RtlArtifact emit_rtl(const QuantizedModel& model, const UnrollPlan& plan, const std::filesystem::path& out_dir,
                     bool force);

std::string layer_module_name(std::size_t index, const LayerSpec& layer);

/// readmemh text: one codeword per line, ceil(n/4) hex digits, OIHW order.
std::string format_weight_hex(const QuantizedLayer& layer);
std::vector<std::uint32_t> parse_weight_hex(std::string_view text, int bits);

struct ManifestLayer {
  std::size_t index = 0;
  std::string module;
  std::string kind;
  std::string arith;
  int bits = 0;
  int scale_exponent = 0;
  int unroll_in = 0;
  int unroll_out = 0;
  PortWidths widths;
  std::string weights_file;  // "-" when the layer has no weights
  std::size_t weight_count = 0;
};

struct Manifest {
  int act_in_width = 0;
  int act_out_width = 0;
  std::vector<ManifestLayer> layers;
  std::vector<std::string> files;
};

Manifest parse_manifest(std::string_view text);

/// Substitutes every {{KEY}}; throws InconsistentInputs on unknown keys.
std::string render_template(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& values);

/// Embedded template text by file name, e.g. "top.sv.in".
std::string_view embedded_template(std::string_view name);

}  // namespace flatstream
