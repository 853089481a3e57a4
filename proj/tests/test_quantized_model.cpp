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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "flatstream/error.hpp"
#include "flatstream/quantized_model.hpp"
#include "support/test_support.hpp"

using namespace flatstream;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected a flatstream::Error");
  return ErrorKind::kIo;
}

QuantizedModel toy_model() {
  const NetworkSpec net = testing::load_fixture_net("toy2.net");
  return quantize_model(net, synthesize_params(net, 4), net.quant);
}

// Checkpoints carry no network name.
QuantizedModel unnamed(QuantizedModel m) {
  m.net.name = "checkpoint";
  return m;
}

}  // namespace

TEST_CASE("packing matches a bit-by-bit oracle") {
  std::mt19937_64 rng(21);
  for (int bits = 1; bits <= 16; ++bits) {
    for (int count : {0, 1, 7, 8, 9, 33}) {
      std::vector<std::uint32_t> codes(static_cast<std::size_t>(count));
      for (auto& c : codes) c = static_cast<std::uint32_t>(rng()) & ((1u << bits) - 1u);
      const std::string packed = pack_codewords(codes, bits);
      REQUIRE(packed == testing::pack_bits_oracle(codes, bits));
      REQUIRE(packed.size() == packed_size(codes.size(), bits));
      REQUIRE(unpack_codewords(packed, codes.size(), bits) == codes);
    }
  }
}

TEST_CASE("quantized layers carry codewords and fused BN") {
  const QuantizedModel m = toy_model();
  CHECK(m.layers[0].quant == LayerQuant{Arith::kShift, 4});
  CHECK(m.layers[0].codes.size() == 4u * 2 * 9);
  CHECK(m.layers[0].bn.size() == 4u);
  CHECK(m.layers[1].bn.empty());
  CHECK(m.config() == m.net.quant);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto decoded = decoded_weights(m.layers[i]);
    for (std::size_t j = 0; j < decoded.size(); ++j) {
      REQUIRE(decoded[j] == testing::oracle_decode(m.layers[i].codes[j], m.layers[i]));
    }
  }
}

TEST_CASE("checkpoint round trip is exact") {
  const QuantizedModel m = toy_model();
  CHECK(parse_checkpoint(serialize_checkpoint(m)) == unnamed(m));
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = testing::random_network(seed);
    REQUIRE(parse_checkpoint(serialize_checkpoint(r.model)) == unnamed(r.model));
  }
}

TEST_CASE("checkpoint layout is header, records, CRC trailer") {
  const QuantizedModel m = toy_model();
  CheckpointLayout layout;
  const std::string bytes = serialize_checkpoint(m, &layout);
  CHECK(bytes.substr(0, 4) == "TMTO");
  REQUIRE(layout.records.size() == 2);
  CHECK(layout.records[0].offset == layout.header_bytes);
  CHECK(layout.records[1].offset == layout.records[0].end);
  CHECK(layout.records[1].end + 4 == bytes.size());
  CHECK(layout.records[0].payload_bytes == packed_size(72, 4));
  const std::uint32_t crc = static_cast<std::uint8_t>(bytes[bytes.size() - 4]) |
                            static_cast<std::uint8_t>(bytes[bytes.size() - 3]) << 8 |
                            static_cast<std::uint8_t>(bytes[bytes.size() - 2]) << 16 |
                            static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[bytes.size() - 1])) << 24;
  CHECK(crc == crc32_of(std::string_view(bytes).substr(0, bytes.size() - 4)));
}

TEST_CASE("corruption, version and truncation are detected") {
  const std::string bytes = serialize_checkpoint(toy_model());
  std::string flipped = bytes;
  flipped[bytes.size() / 2] = static_cast<char>(flipped[bytes.size() / 2] ^ 0x10);
  CHECK(kind_of([&] { parse_checkpoint(flipped); }) == ErrorKind::kCorruptChecksum);
  std::string version = bytes;
  version[4] = 2;
  CHECK(kind_of([&] { parse_checkpoint(version); }) == ErrorKind::kVersionMismatch);
  CHECK(kind_of([&] { parse_checkpoint(bytes.substr(0, 6)); }) == ErrorKind::kCorruptChecksum);
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK(kind_of([&] { parse_checkpoint(magic); }) == ErrorKind::kCorruptChecksum);
}

TEST_CASE("save and load through the filesystem") {
  const auto dir = testing::scratch_dir("checkpoint");
  const QuantizedModel m = toy_model();
  save_quantized_checkpoint(m, dir / "m.tmto");
  CHECK(load_quantized_checkpoint(dir / "m.tmto") == unnamed(m));
}

TEST_CASE("inconsistent quantized models are rejected") {
  QuantizedModel m = toy_model();
  m.layers[0].codes.pop_back();
  CHECK(kind_of([&] { m.validate(); }) == ErrorKind::kInconsistentInputs);
  QuantizedModel z = toy_model();
  z.layers[0].codes[0] = 0b1111;  // negative zero is not canonical
  CHECK(kind_of([&] { z.validate(); }) == ErrorKind::kInconsistentInputs);
}
