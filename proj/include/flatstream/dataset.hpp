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

namespace flatstream {

/// HWC activation codes in unsigned 3.5.
struct ActTensor {
  Shape3 shape;
  std::vector<std::uint8_t> codes;

  ActTensor() = default;
  explicit ActTensor(Shape3 s) : shape(s), codes(s.size(), 0) {}
  ActTensor(Shape3 s, std::vector<std::uint8_t> c);

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * shape.width + x) * shape.channels + c;
  }
  std::uint8_t at(int y, int x, int c) const { return codes[index(y, x, c)]; }
  friend bool operator==(const ActTensor&, const ActTensor&) = default;
};

/// Labeled images. File layout (little-endian): u32 count, u32 H, u32 W,
/// u32 C, u32 classes, then per sample H*W*C code bytes and a u16 label.
struct Dataset {
  Shape3 shape;
  int class_count = 1;
  std::vector<ActTensor> images;
  std::vector<std::uint16_t> labels;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

std::string serialize_dataset(const Dataset& data);
Dataset parse_dataset(std::string_view bytes);
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Unlabeled image batch, same layout as a dataset with zero classes and
/// no label field.
std::string serialize_images(const std::vector<ActTensor>& images);
std::vector<ActTensor> parse_images(std::string_view bytes);

struct SyntheticOptions {
  int samples = 64;
  int classes = 2;
  Shape3 shape{4, 4, 1};
  /// Per-pixel noise half-width in codes around the class prototype.
  int noise = 24;
  std::uint64_t seed = 1;
};

/// Prototype-plus-noise classes: each class owns a random code image and
/// samples perturb it uniformly. Labels cycle through the classes.
Dataset synthesize_dataset(const SyntheticOptions& opts);

ActTensor random_image(Shape3 shape, std::uint64_t seed);

}  // namespace flatstream
