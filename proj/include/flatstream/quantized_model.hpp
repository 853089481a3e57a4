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

#include "flatstream/model_ir.hpp"
#include "flatstream/quantizer.hpp"

namespace flatstream {

struct QuantizedLayer {
  LayerQuant quant{Arith::kNone, 0};
  /// Shift bias b or fixed-point position p, fixed at quantization time.
  int scale_exponent = 0;
  std::vector<std::uint32_t> codes;  // OIHW (depthwise {C,1,K,K})
  std::vector<FusedAffine> bn;       // one per output channel when the layer has BN

  WeightFormat format() const;
  friend bool operator==(const QuantizedLayer&, const QuantizedLayer&) = default;
};

/// A network with every weighted layer quantized: the (net, q, tensors) triple.
struct QuantizedModel {
  NetworkSpec net;
  std::vector<QuantizedLayer> layers;

  QuantConfig config() const;
  /// Throws InconsistentInputs when tensors disagree with the net or q.
  void validate() const;
  friend bool operator==(const QuantizedModel&, const QuantizedModel&) = default;
};

QuantizedModel quantize_model(const NetworkSpec& net, const std::vector<LayerParams>& params,
                              const QuantConfig& q);

/// Real-valued view of the quantized weights of one layer.
std::vector<double> decoded_weights(const QuantizedLayer& layer);

// Bit packing, LSB first: codeword i occupies stream bits [i*bits, (i+1)*bits).
std::string pack_codewords(const std::vector<std::uint32_t>& codes, int bits);
std::vector<std::uint32_t> unpack_codewords(std::string_view bytes, std::size_t count, int bits);
inline std::size_t packed_size(std::size_t count, int bits) {
  return (count * static_cast<std::size_t>(bits) + 7) / 8;
}

std::uint32_t crc32_of(std::string_view bytes);

// Checkpoint: "TMTO" | version u16 | layer count u16 | network header |
// per-layer records | CRC32. All integers little-endian.
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointLayout {
  std::size_t header_bytes = 0;
  struct Record {
    std::size_t offset = 0;          // start of the record
    std::size_t payload_offset = 0;  // first packed codeword byte
    std::size_t payload_bytes = 0;
    std::size_t end = 0;
  };
  std::vector<Record> records;
};

std::string serialize_checkpoint(const QuantizedModel& model, CheckpointLayout* layout = nullptr);
QuantizedModel parse_checkpoint(std::string_view bytes);
void save_quantized_checkpoint(const QuantizedModel& model, const std::filesystem::path& path);
QuantizedModel load_quantized_checkpoint(const std::filesystem::path& path);

}  // namespace flatstream
