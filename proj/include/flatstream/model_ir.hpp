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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace flatstream {

enum class LayerKind { kConv, kDepthwiseConv, kPointwiseConv, kAvgPool, kFullyConnected };

std::string_view layer_kind_keyword(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(std::string_view keyword);

/// Per-layer weight arithmetic. kNone marks layers without weights (pooling).
enum class Arith : std::uint8_t { kFixed = 0, kShift = 1, kNone = 2 };

std::string_view arith_name(Arith arith);

struct LayerQuant {
  Arith arith = Arith::kFixed;
  int bits = 8;

  friend bool operator==(const LayerQuant&, const LayerQuant&) = default;
};

/// The q of the search: one entry per layer, pooling layers carry kNone.
using QuantConfig = std::vector<LayerQuant>;

struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  int kernel = 1;
  int stride = 1;
  int in_channels = 1;
  int out_channels = 1;
  int in_height = 1;
  int in_width = 1;
  int padding = 0;
  bool has_bn = false;
  bool has_relu = false;

  int out_height() const { return (in_height + 2 * padding - kernel) / stride + 1; }
  int out_width() const { return (in_width + 2 * padding - kernel) / stride + 1; }

  bool has_weights() const { return kind != LayerKind::kAvgPool; }
  bool is_channelwise() const {
    return kind == LayerKind::kDepthwiseConv || kind == LayerKind::kAvgPool;
  }
  /// Terms summed into one accumulator: C*K^2, K^2 for channel-wise kinds.
  std::int64_t fan_in() const;
  std::size_t weight_count() const;
  /// Weights plus gamma, beta, mu, sigma when batch-normalized.
  std::size_t parameter_count() const;
  /// OIHW shape; depthwise uses {C, 1, K, K}.
  std::vector<int> weight_shape() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Shape3 {
  int height = 1;
  int width = 1;
  int channels = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * width * channels;
  }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

struct NetworkSpec {
  std::string name = "net";
  Shape3 input;
  int class_count = 1;
  std::vector<LayerSpec> layers;
  /// Optional per-layer quantization requests carried by the descriptor.
  QuantConfig quant;

  Shape3 output_shape() const;
  /// Throws ShapeMismatch or MalformedDescriptor.
  void validate() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Validates one layer in isolation (kind constraints, positive dims).
void validate_layer(const LayerSpec& layer, std::size_t index);

/// Real-valued tensor, row-major.
struct RealTensor {
  std::vector<int> shape;
  std::vector<double> data;

  RealTensor() = default;
  RealTensor(std::vector<int> shape_in, std::vector<double> data_in);
  explicit RealTensor(std::vector<int> shape_in);

  std::size_t size() const { return data.size(); }
  static std::size_t element_count(const std::vector<int>& shape);
};

/// Parameters of one layer as loaded from the weight blob.
struct LayerParams {
  RealTensor weights;
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> mean;
  std::vector<double> sigma;
};

struct Model {
  NetworkSpec net;
  std::vector<LayerParams> params;  // one entry per layer, empty for pooling
};

// Descriptor text format.
NetworkSpec parse_descriptor(std::string_view text);
std::string format_descriptor(const NetworkSpec& net);
NetworkSpec read_descriptor(const std::filesystem::path& path);

// Weight blob: little-endian float32 in layer order, weights -> gamma -> beta -> mu -> sigma.
std::size_t blob_float_count(const NetworkSpec& net);
std::vector<LayerParams> parse_weight_blob(const NetworkSpec& net, std::string_view bytes);
std::string serialize_weight_blob(const NetworkSpec& net, const std::vector<LayerParams>& params);

Model load_model(const std::filesystem::path& descriptor_path,
                 const std::filesystem::path& weights_path);

/// Deterministic synthetic parameters (He-style weights, mild BN), for fixtures and tests.
std::vector<LayerParams> synthesize_params(const NetworkSpec& net, std::uint64_t seed);

/// Default q0: every weighted layer fixed-point 8-bit.
QuantConfig initial_quant_config(const NetworkSpec& net);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace flatstream
