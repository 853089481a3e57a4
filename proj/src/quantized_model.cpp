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

#include "flatstream/quantized_model.hpp"

#include <zlib.h>

#include "flatstream/error.hpp"

namespace flatstream {

WeightFormat QuantizedLayer::format() const {
  if (quant.arith == Arith::kShift) return ShiftLayerParams{quant.bits, scale_exponent};
  return FixedFormat{quant.bits, scale_exponent};
}

QuantConfig QuantizedModel::config() const {
  QuantConfig q(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) q[i] = layers[i].quant;
  return q;
}

void QuantizedModel::validate() const {
  net.validate();
  if (layers.size() != net.layers.size()) {
    fail(ErrorKind::kInconsistentInputs, "quantized model has " + std::to_string(layers.size()) +
                                             " layers, network has " + std::to_string(net.layers.size()));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& spec = net.layers[i];
    const QuantizedLayer& ql = layers[i];
    const std::string ctx = "layer " + std::to_string(i);
    if (!spec.has_weights()) {
      if (ql.quant.arith != Arith::kNone || !ql.codes.empty() || !ql.bn.empty()) {
        fail(ErrorKind::kInconsistentInputs, ctx + ": pooling layer carries quantized data");
      }
      continue;
    }
    if (ql.quant.arith == Arith::kNone) fail(ErrorKind::kInconsistentInputs, ctx + ": missing arithmetic");
    if (ql.quant.bits < 2 || ql.quant.bits > 16) fail(ErrorKind::kInconsistentInputs, ctx + ": bad bit-width");
    if (ql.codes.size() != spec.weight_count()) fail(ErrorKind::kInconsistentInputs, ctx + ": codeword count");
    const WeightFormat fmt = ql.format();
    for (std::uint32_t c : ql.codes) {
      if (!code_is_valid(c, fmt)) fail(ErrorKind::kInconsistentInputs, ctx + ": invalid codeword");
    }
    const std::size_t bn_expected = spec.has_bn ? static_cast<std::size_t>(spec.out_channels) : 0;
    if (ql.bn.size() != bn_expected) fail(ErrorKind::kInconsistentInputs, ctx + ": BN channel count");
  }
}

QuantizedModel quantize_model(const NetworkSpec& net, const std::vector<LayerParams>& params,
                              const QuantConfig& q) {
  if (params.size() != net.layers.size() || q.size() != net.layers.size()) {
    fail(ErrorKind::kInconsistentInputs, "parameters or quant config do not cover every layer");
  }
  QuantizedModel model;
  model.net = net;
  model.net.quant = q;
  model.layers.resize(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& spec = net.layers[i];
    QuantizedLayer& ql = model.layers[i];
    if (!spec.has_weights()) {
      ql.quant = LayerQuant{Arith::kNone, 0};
      continue;
    }
    const LayerParams& p = params[i];
    if (p.weights.size() != spec.weight_count()) {
      fail(ErrorKind::kInconsistentInputs, "layer " + std::to_string(i) + ": weight count");
    }
    ql.quant = q[i];
    if (ql.quant.arith == Arith::kNone) {
      fail(ErrorKind::kInconsistentInputs, "layer " + std::to_string(i) + ": weighted layer needs an arithmetic");
    }
    const WeightFormat fmt = choose_format(p.weights.data, ql.quant.arith == Arith::kShift, ql.quant.bits);
    ql.scale_exponent = std::visit(
        [](const auto& f) {
          if constexpr (std::is_same_v<std::decay_t<decltype(f)>, ShiftLayerParams>) {
            return f.bias;
          } else {
            return f.point;
          }
        },
        fmt);
    ql.codes = quantize_tensor(p.weights.data, spec.weight_shape(), fmt).codes;
    if (spec.has_bn) ql.bn = fuse_bn(p.gamma, p.beta, p.mean, p.sigma);
  }
  return model;
}

std::vector<double> decoded_weights(const QuantizedLayer& layer) {
  std::vector<double> out(layer.codes.size());
  const WeightFormat fmt = layer.format();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = decode_weight(layer.codes[i], fmt);
  return out;
}

std::string pack_codewords(const std::vector<std::uint32_t>& codes, int bits) {
  std::string out(packed_size(codes.size(), bits), '\0');
  std::size_t bit = 0;
  for (std::uint32_t code : codes) {
    for (int b = 0; b < bits; ++b, ++bit) {
      if ((code >> b) & 1u) out[bit / 8] = static_cast<char>(out[bit / 8] | (1 << (bit % 8)));
    }
  }
  return out;
}

std::vector<std::uint32_t> unpack_codewords(std::string_view bytes, std::size_t count, int bits) {
  if (bytes.size() < packed_size(count, bits)) fail(ErrorKind::kMalformedDescriptor, "packed payload too short");
  std::vector<std::uint32_t> out(count, 0);
  std::size_t bit = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < bits; ++b, ++bit) {
      if ((static_cast<unsigned char>(bytes[bit / 8]) >> (bit % 8)) & 1u) v |= 1u << b;
    }
    out[i] = v;
  }
  return out;
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

namespace {

class Writer {
 public:
  void u8(unsigned v) { out_.push_back(static_cast<char>(v & 0xff)); }
  void u16(unsigned v) {
    u8(v);
    u8(v >> 8);
  }
  void i16(int v) { u16(static_cast<unsigned>(static_cast<std::uint16_t>(static_cast<std::int16_t>(v)))); }
  void u32(std::uint32_t v) {
    u16(v & 0xffff);
    u16(v >> 16);
  }
  void bytes(std::string_view b) { out_.append(b); }
  std::size_t size() const { return out_.size(); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  unsigned u8() {
    need(1);
    return static_cast<unsigned char>(in_[pos_++]);
  }
  unsigned u16() {
    unsigned lo = u8();
    return lo | (u8() << 8);
  }
  int i16() { return static_cast<std::int16_t>(static_cast<std::uint16_t>(u16())); }
  std::uint32_t u32() {
    std::uint32_t lo = u16();
    return lo | (static_cast<std::uint32_t>(u16()) << 16);
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    std::string_view v = in_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) fail(ErrorKind::kMalformedDescriptor, "checkpoint record truncated");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

void check_u16(long long v, const char* what) {
  if (v < 0 || v > 0xffff) fail(ErrorKind::kInvalidArgument, std::string(what) + " does not fit the checkpoint field");
}

}  // namespace

std::string serialize_checkpoint(const QuantizedModel& model, CheckpointLayout* layout) {
  model.validate();
  const NetworkSpec& net = model.net;
  Writer w;
  w.bytes("TMTO");
  w.u16(kCheckpointVersion);
  check_u16(static_cast<long long>(net.layers.size()), "layer count");
  w.u16(static_cast<unsigned>(net.layers.size()));
  check_u16(net.input.height, "input height");
  check_u16(net.input.width, "input width");
  check_u16(net.input.channels, "input channels");
  w.u16(net.input.height);
  w.u16(net.input.width);
  w.u16(net.input.channels);
  w.u32(static_cast<std::uint32_t>(net.class_count));
  if (layout) {
    layout->header_bytes = w.size();
    layout->records.clear();
  }
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    const QuantizedLayer& ql = model.layers[i];
    CheckpointLayout::Record rec;
    rec.offset = w.size();
    w.u8(static_cast<unsigned>(ql.quant.arith));
    w.u8(static_cast<unsigned>(ql.quant.bits));
    w.i16(ql.scale_exponent);
    w.u8(static_cast<unsigned>(l.kind));
    w.u8(static_cast<unsigned>(l.kernel));
    w.u8(static_cast<unsigned>(l.stride));
    w.u8(static_cast<unsigned>(l.padding));
    w.u8((l.has_bn ? 1u : 0u) | (l.has_relu ? 2u : 0u));
    for (int v : {l.in_channels, l.out_channels, l.in_height, l.in_width}) {
      check_u16(v, "layer dimension");
      w.u16(static_cast<unsigned>(v));
    }
    w.u32(static_cast<std::uint32_t>(ql.codes.size()));
    rec.payload_offset = w.size();
    const std::string payload = ql.codes.empty() ? std::string() : pack_codewords(ql.codes, ql.quant.bits);
    rec.payload_bytes = payload.size();
    w.bytes(payload);
    for (const FusedAffine& a : ql.bn) {
      w.i16(a.scale);
      w.i16(a.offset);
    }
    rec.end = w.size();
    if (layout) layout->records.push_back(rec);
  }
  std::string body = w.take();
  const std::uint32_t crc = crc32_of(body);
  Writer tail;
  tail.u32(crc);
  body += tail.take();
  return body;
}

QuantizedModel parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < 12) fail(ErrorKind::kCorruptChecksum, "checkpoint truncated");
  if (bytes.substr(0, 4) != "TMTO") fail(ErrorKind::kCorruptChecksum, "bad checkpoint magic");
  {
    Reader hdr(bytes.substr(4, 2));
    const unsigned version = hdr.u16();
    if (version != kCheckpointVersion) {
      fail(ErrorKind::kVersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                            std::to_string(kCheckpointVersion));
    }
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  Reader crc_reader(bytes.substr(bytes.size() - 4));
  if (crc_reader.u32() != crc32_of(body)) fail(ErrorKind::kCorruptChecksum, "checkpoint CRC32 mismatch");

  Reader r(body);
  r.bytes(6);
  const unsigned layer_count = r.u16();
  QuantizedModel model;
  NetworkSpec& net = model.net;
  net.input.height = static_cast<int>(r.u16());
  net.input.width = static_cast<int>(r.u16());
  net.input.channels = static_cast<int>(r.u16());
  net.class_count = static_cast<int>(r.u32());
  net.name = "checkpoint";
  for (unsigned i = 0; i < layer_count; ++i) {
    QuantizedLayer ql;
    LayerSpec l;
    const unsigned arith = r.u8();
    if (arith > 2) fail(ErrorKind::kMalformedDescriptor, "unknown arithmetic tag");
    ql.quant.arith = static_cast<Arith>(arith);
    ql.quant.bits = static_cast<int>(r.u8());
    ql.scale_exponent = r.i16();
    const unsigned kind = r.u8();
    if (kind > 4) fail(ErrorKind::kMalformedDescriptor, "unknown layer kind tag");
    l.kind = static_cast<LayerKind>(kind);
    l.kernel = static_cast<int>(r.u8());
    l.stride = static_cast<int>(r.u8());
    l.padding = static_cast<int>(r.u8());
    const unsigned flags = r.u8();
    l.has_bn = (flags & 1u) != 0;
    l.has_relu = (flags & 2u) != 0;
    l.in_channels = static_cast<int>(r.u16());
    l.out_channels = static_cast<int>(r.u16());
    l.in_height = static_cast<int>(r.u16());
    l.in_width = static_cast<int>(r.u16());
    validate_layer(l, i);
    const std::uint32_t count = r.u32();
    if (count != l.weight_count()) fail(ErrorKind::kMalformedDescriptor, "codeword count disagrees with layer shape");
    if (count > 0) {
      if (ql.quant.bits < 2 || ql.quant.bits > 16) fail(ErrorKind::kMalformedDescriptor, "bad bit-width");
      ql.codes = unpack_codewords(r.bytes(packed_size(count, ql.quant.bits)), count, ql.quant.bits);
    }
    if (l.has_bn) {
      ql.bn.resize(static_cast<std::size_t>(l.out_channels));
      for (FusedAffine& a : ql.bn) {
        a.scale = static_cast<std::int16_t>(r.i16());
        a.offset = static_cast<std::int16_t>(r.i16());
      }
    }
    net.layers.push_back(l);
    model.layers.push_back(std::move(ql));
  }
  if (r.pos() != body.size()) fail(ErrorKind::kMalformedDescriptor, "trailing bytes in checkpoint");
  net.quant = model.config();
  try {
    model.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kMalformedDescriptor, std::string("checkpoint content invalid: ") + e.what());
  }
  return model;
}

void save_quantized_checkpoint(const QuantizedModel& model, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(model));
}

QuantizedModel load_quantized_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path));
}

}  // namespace flatstream
