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

#include "flatstream/dataset.hpp"

#include <algorithm>
#include <random>

#include "flatstream/error.hpp"

namespace flatstream {

ActTensor::ActTensor(Shape3 s, std::vector<std::uint8_t> c) : shape(s), codes(std::move(c)) {
  if (codes.size() != shape.size()) fail(ErrorKind::kShapeMismatch, "activation tensor size disagrees with shape");
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

std::uint32_t get_u32(std::string_view in, std::size_t& pos) {
  if (pos + 4 > in.size()) fail(ErrorKind::kMalformedDescriptor, "dataset truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

std::uint16_t get_u16(std::string_view in, std::size_t& pos) {
  if (pos + 2 > in.size()) fail(ErrorKind::kMalformedDescriptor, "dataset truncated");
  const auto v = static_cast<std::uint16_t>(static_cast<unsigned char>(in[pos]) |
                                            (static_cast<unsigned char>(in[pos + 1]) << 8));
  pos += 2;
  return v;
}

Shape3 get_shape(std::string_view in, std::size_t& pos) {
  Shape3 s;
  s.height = static_cast<int>(get_u32(in, pos));
  s.width = static_cast<int>(get_u32(in, pos));
  s.channels = static_cast<int>(get_u32(in, pos));
  if (s.height < 1 || s.width < 1 || s.channels < 1) fail(ErrorKind::kMalformedDescriptor, "dataset shape must be positive");
  return s;
}

ActTensor get_image(std::string_view in, std::size_t& pos, Shape3 shape) {
  const std::size_t n = shape.size();
  if (pos + n > in.size()) fail(ErrorKind::kMalformedDescriptor, "dataset truncated");
  ActTensor t(shape);
  std::copy(in.begin() + static_cast<std::ptrdiff_t>(pos), in.begin() + static_cast<std::ptrdiff_t>(pos + n),
            t.codes.begin());
  pos += n;
  return t;
}

void put_header(std::string& out, std::size_t count, Shape3 shape, int classes) {
  put_u32(out, static_cast<std::uint32_t>(count));
  put_u32(out, static_cast<std::uint32_t>(shape.height));
  put_u32(out, static_cast<std::uint32_t>(shape.width));
  put_u32(out, static_cast<std::uint32_t>(shape.channels));
  put_u32(out, static_cast<std::uint32_t>(classes));
}

}  // namespace

std::string serialize_dataset(const Dataset& data) {
  if (data.labels.size() != data.images.size()) fail(ErrorKind::kInconsistentInputs, "label count disagrees with image count");
  std::string out;
  put_header(out, data.size(), data.shape, data.class_count);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!(data.images[i].shape == data.shape)) fail(ErrorKind::kShapeMismatch, "dataset image shape");
    out.append(reinterpret_cast<const char*>(data.images[i].codes.data()), data.images[i].codes.size());
    put_u16(out, data.labels[i]);
  }
  return out;
}

Dataset parse_dataset(std::string_view bytes) {
  std::size_t pos = 0;
  Dataset d;
  const std::uint32_t count = get_u32(bytes, pos);
  d.shape = get_shape(bytes, pos);
  d.class_count = static_cast<int>(get_u32(bytes, pos));
  if (d.class_count < 1) fail(ErrorKind::kMalformedDescriptor, "dataset class count must be positive");
  for (std::uint32_t i = 0; i < count; ++i) {
    d.images.push_back(get_image(bytes, pos, d.shape));
    const std::uint16_t label = get_u16(bytes, pos);
    if (label >= d.class_count) fail(ErrorKind::kMalformedDescriptor, "label out of range");
    d.labels.push_back(label);
  }
  if (pos != bytes.size()) fail(ErrorKind::kMalformedDescriptor, "trailing bytes in dataset");
  return d;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  write_file(path, serialize_dataset(data));
}

Dataset load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

std::string serialize_images(const std::vector<ActTensor>& images) {
  std::string out;
  const Shape3 shape = images.empty() ? Shape3{} : images.front().shape;
  put_header(out, images.size(), shape, 0);
  for (const ActTensor& t : images) {
    if (!(t.shape == shape)) fail(ErrorKind::kShapeMismatch, "image batch mixes shapes");
    out.append(reinterpret_cast<const char*>(t.codes.data()), t.codes.size());
  }
  return out;
}

std::vector<ActTensor> parse_images(std::string_view bytes) {
  std::size_t pos = 0;
  const std::uint32_t count = get_u32(bytes, pos);
  const Shape3 shape = get_shape(bytes, pos);
  get_u32(bytes, pos);
  std::vector<ActTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) out.push_back(get_image(bytes, pos, shape));
  if (pos != bytes.size()) fail(ErrorKind::kMalformedDescriptor, "trailing bytes in image batch");
  return out;
}

Dataset synthesize_dataset(const SyntheticOptions& opts) {
  if (opts.classes < 1 || opts.classes > 65535) fail(ErrorKind::kInvalidArgument, "class count out of range");
  if (opts.samples < 0) fail(ErrorKind::kInvalidArgument, "sample count must be nonnegative");
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<int> code(0, 255);
  std::vector<ActTensor> prototypes;
  for (int k = 0; k < opts.classes; ++k) {
    ActTensor p(opts.shape);
    for (auto& c : p.codes) c = static_cast<std::uint8_t>(code(rng));
    prototypes.push_back(std::move(p));
  }
  std::uniform_int_distribution<int> jitter(-opts.noise, opts.noise);
  Dataset d;
  d.shape = opts.shape;
  d.class_count = opts.classes;
  for (int i = 0; i < opts.samples; ++i) {
    const int label = i % opts.classes;
    ActTensor img = prototypes[static_cast<std::size_t>(label)];
    for (auto& c : img.codes) c = static_cast<std::uint8_t>(std::clamp(c + jitter(rng), 0, 255));
    d.images.push_back(std::move(img));
    d.labels.push_back(static_cast<std::uint16_t>(label));
  }
  return d;
}

ActTensor random_image(Shape3 shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> code(0, 255);
  ActTensor t(shape);
  for (auto& c : t.codes) c = static_cast<std::uint8_t>(code(rng));
  return t;
}

}  // namespace flatstream
