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

#include "flatstream/model_ir.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "flatstream/error.hpp"

namespace flatstream {

namespace {

constexpr int kDescriptorVersion = 1;

std::string layer_context(std::size_t index) { return "layer " + std::to_string(index); }

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

int parse_int(std::string_view token, std::size_t line_no) {
  if (token.empty()) fail(ErrorKind::kMalformedDescriptor, "empty integer on line " + std::to_string(line_no));
  std::size_t pos = 0;
  bool negative = false;
  if (token[0] == '-') {
    negative = true;
    pos = 1;
  }
  if (pos == token.size()) fail(ErrorKind::kMalformedDescriptor, "bad integer on line " + std::to_string(line_no));
  long long value = 0;
  for (; pos < token.size(); ++pos) {
    char c = token[pos];
    if (c < '0' || c > '9' || value > 1'000'000'000) {
      fail(ErrorKind::kMalformedDescriptor,
           "bad integer '" + std::string(token) + "' on line " + std::to_string(line_no));
    }
    value = value * 10 + (c - '0');
  }
  return static_cast<int>(negative ? -value : value);
}

Shape3 parse_shape_token(std::string_view token, std::size_t line_no) {
  // HxWxC
  Shape3 s;
  std::size_t a = token.find('x');
  std::size_t b = a == std::string_view::npos ? a : token.find('x', a + 1);
  if (a == std::string_view::npos || b == std::string_view::npos) {
    fail(ErrorKind::kMalformedDescriptor, "expected HxWxC on line " + std::to_string(line_no));
  }
  s.height = parse_int(token.substr(0, a), line_no);
  s.width = parse_int(token.substr(a + 1, b - a - 1), line_no);
  s.channels = parse_int(token.substr(b + 1), line_no);
  return s;
}

LayerQuant parse_quant_token(std::string_view token, std::size_t line_no) {
  std::size_t colon = token.find(':');
  if (colon == std::string_view::npos) {
    fail(ErrorKind::kMalformedDescriptor, "expected quant=arith:bits on line " + std::to_string(line_no));
  }
  std::string_view arith = token.substr(0, colon);
  LayerQuant q;
  if (arith == "fixed") {
    q.arith = Arith::kFixed;
  } else if (arith == "shift") {
    q.arith = Arith::kShift;
  } else {
    fail(ErrorKind::kMalformedDescriptor, "unknown arithmetic '" + std::string(arith) + "' on line " +
                                              std::to_string(line_no));
  }
  q.bits = parse_int(token.substr(colon + 1), line_no);
  return q;
}

}  // namespace

std::string_view layer_kind_keyword(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kDepthwiseConv: return "dw";
    case LayerKind::kPointwiseConv: return "pw";
    case LayerKind::kAvgPool: return "avgpool";
    case LayerKind::kFullyConnected: return "fc";
  }
  return "?";
}

std::optional<LayerKind> parse_layer_kind(std::string_view keyword) {
  if (keyword == "conv") return LayerKind::kConv;
  if (keyword == "dw") return LayerKind::kDepthwiseConv;
  if (keyword == "pw") return LayerKind::kPointwiseConv;
  if (keyword == "avgpool") return LayerKind::kAvgPool;
  if (keyword == "fc") return LayerKind::kFullyConnected;
  return std::nullopt;
}

std::string_view arith_name(Arith arith) {
  switch (arith) {
    case Arith::kFixed: return "fixed";
    case Arith::kShift: return "shift";
    case Arith::kNone: return "none";
  }
  return "?";
}

std::int64_t LayerSpec::fan_in() const {
  const std::int64_t k2 = static_cast<std::int64_t>(kernel) * kernel;
  return is_channelwise() ? k2 : k2 * in_channels;
}

std::size_t LayerSpec::weight_count() const {
  if (!has_weights()) return 0;
  const std::size_t k2 = static_cast<std::size_t>(kernel) * kernel;
  if (kind == LayerKind::kDepthwiseConv) return static_cast<std::size_t>(in_channels) * k2;
  return static_cast<std::size_t>(out_channels) * in_channels * k2;
}

std::size_t LayerSpec::parameter_count() const {
  return weight_count() + (has_bn ? 4 * static_cast<std::size_t>(out_channels) : 0);
}

std::vector<int> LayerSpec::weight_shape() const {
  if (!has_weights()) return {};
  if (kind == LayerKind::kDepthwiseConv) return {in_channels, 1, kernel, kernel};
  return {out_channels, in_channels, kernel, kernel};
}

void validate_layer(const LayerSpec& l, std::size_t index) {
  auto bad = [&](const std::string& what) {
    fail(ErrorKind::kMalformedDescriptor, layer_context(index) + ": " + what);
  };
  if (l.kernel < 1) bad("kernel must be >= 1");
  if (l.stride != 1 && l.stride != 2) bad("stride must be 1 or 2");
  if (l.in_channels < 1 || l.out_channels < 1) bad("channel counts must be >= 1");
  if (l.in_height < 1 || l.in_width < 1) bad("input dims must be >= 1");
  if (l.padding < 0 || l.padding > l.kernel - 1) bad("padding must be in [0, K-1]");
  switch (l.kind) {
    case LayerKind::kPointwiseConv:
      if (l.kernel != 1 || l.padding != 0) bad("pointwise requires K=1, P=0");
      break;
    case LayerKind::kDepthwiseConv:
      if (l.in_channels != l.out_channels) bad("depthwise requires C = C'");
      break;
    case LayerKind::kAvgPool:
      if (l.in_channels != l.out_channels) bad("pooling requires C = C'");
      if (l.padding != 0) bad("pooling requires P=0");
      if (l.has_bn) bad("pooling carries no BN");
      break;
    case LayerKind::kFullyConnected:
      if (l.kernel != 1 || l.stride != 1 || l.padding != 0) bad("fc requires K=1, S=1, P=0");
      if (l.in_height != 1 || l.in_width != 1) bad("fc requires a 1x1 input map");
      if (l.has_bn) bad("fc carries no BN");
      break;
    case LayerKind::kConv:
      break;
  }
  if (l.in_height + 2 * l.padding < l.kernel || l.in_width + 2 * l.padding < l.kernel) {
    bad("kernel larger than padded input");
  }
  if (l.out_height() < 1 || l.out_width() < 1) bad("output dims must be >= 1");
}

Shape3 NetworkSpec::output_shape() const {
  if (layers.empty()) return input;
  const LayerSpec& last = layers.back();
  return Shape3{last.out_height(), last.out_width(), last.out_channels};
}

void NetworkSpec::validate() const {
  if (input.height < 1 || input.width < 1 || input.channels < 1) {
    fail(ErrorKind::kMalformedDescriptor, "input shape must be positive");
  }
  if (layers.empty()) fail(ErrorKind::kMalformedDescriptor, "network has no layers");
  Shape3 cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    validate_layer(l, i);
    if (l.in_height != cur.height || l.in_width != cur.width || l.in_channels != cur.channels) {
      fail(ErrorKind::kShapeMismatch,
           layer_context(i) + " expects " + std::to_string(l.in_height) + "x" + std::to_string(l.in_width) +
               "x" + std::to_string(l.in_channels) + " but receives " + std::to_string(cur.height) + "x" +
               std::to_string(cur.width) + "x" + std::to_string(cur.channels));
    }
    cur = Shape3{l.out_height(), l.out_width(), l.out_channels};
  }
  if (static_cast<std::size_t>(class_count) != cur.size()) {
    fail(ErrorKind::kShapeMismatch, "class count " + std::to_string(class_count) +
                                        " does not match final output size " + std::to_string(cur.size()));
  }
  if (!quant.empty()) {
    if (quant.size() != layers.size()) {
      fail(ErrorKind::kMalformedDescriptor, "quant config covers " + std::to_string(quant.size()) +
                                                " layers, network has " + std::to_string(layers.size()));
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerQuant& q = quant[i];
      if (!layers[i].has_weights()) {
        if (q.arith != Arith::kNone) fail(ErrorKind::kMalformedDescriptor, layer_context(i) + ": pooling has no weights to quantize");
        continue;
      }
      if (q.arith == Arith::kNone) fail(ErrorKind::kMalformedDescriptor, layer_context(i) + ": weighted layer needs an arithmetic");
      if (q.bits < 2 || q.bits > 16) fail(ErrorKind::kMalformedDescriptor, layer_context(i) + ": bits must be in [2, 16]");
    }
  }
}

RealTensor::RealTensor(std::vector<int> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  if (data.size() != element_count(shape)) {
    fail(ErrorKind::kShapeMismatch, "tensor data does not match its shape");
  }
  for (double v : data) {
    if (!std::isfinite(v)) fail(ErrorKind::kInvalidArgument, "tensor holds a non-finite value");
  }
}

RealTensor::RealTensor(std::vector<int> shape_in)
    : shape(std::move(shape_in)), data(element_count(shape), 0.0) {}

std::size_t RealTensor::element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return shape.empty() ? 0 : n;
}

NetworkSpec parse_descriptor(std::string_view text) {
  NetworkSpec net;
  bool saw_format = false;
  bool saw_input = false;
  bool saw_classes = false;
  bool any_quant = false;
  std::vector<std::optional<LayerQuant>> quant;
  std::vector<std::optional<Shape3>> declared_inputs;
  std::vector<std::optional<int>> declared_out;
  std::vector<LayerSpec> layers;

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (std::size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto tok = split_ws(line);
    if (tok.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const std::string where = " on line " + std::to_string(line_no);
    if (!saw_format) {
      if (tok[0] != "format" || tok.size() != 3 || tok[1] != "flatstream-net") {
        fail(ErrorKind::kMalformedDescriptor, "descriptor must start with 'format flatstream-net <version>'");
      }
      if (parse_int(tok[2], line_no) != kDescriptorVersion) {
        fail(ErrorKind::kMalformedDescriptor, "unsupported descriptor schema version " + std::string(tok[2]));
      }
      saw_format = true;
      continue;
    }
    if (tok[0] == "name") {
      if (tok.size() != 2) fail(ErrorKind::kMalformedDescriptor, "name takes one token" + where);
      net.name = std::string(tok[1]);
    } else if (tok[0] == "input") {
      if (tok.size() != 4) fail(ErrorKind::kMalformedDescriptor, "input takes H W C" + where);
      net.input = Shape3{parse_int(tok[1], line_no), parse_int(tok[2], line_no), parse_int(tok[3], line_no)};
      saw_input = true;
    } else if (tok[0] == "classes") {
      if (tok.size() != 2) fail(ErrorKind::kMalformedDescriptor, "classes takes one integer" + where);
      net.class_count = parse_int(tok[1], line_no);
      saw_classes = true;
    } else if (tok[0] == "layer") {
      if (tok.size() < 2) fail(ErrorKind::kMalformedDescriptor, "layer needs a kind" + where);
      auto kind = parse_layer_kind(tok[1]);
      if (!kind) fail(ErrorKind::kMalformedDescriptor, "unknown layer kind '" + std::string(tok[1]) + "'" + where);
      LayerSpec l;
      l.kind = *kind;
      std::optional<Shape3> in;
      std::optional<int> out;
      std::optional<LayerQuant> q;
      for (std::size_t i = 2; i < tok.size(); ++i) {
        std::string_view t = tok[i];
        if (t == "bn") {
          l.has_bn = true;
          continue;
        }
        if (t == "relu") {
          l.has_relu = true;
          continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string_view::npos) {
          fail(ErrorKind::kMalformedDescriptor, "unknown layer attribute '" + std::string(t) + "'" + where);
        }
        std::string_view key = t.substr(0, eq);
        std::string_view value = t.substr(eq + 1);
        if (key == "k") {
          l.kernel = parse_int(value, line_no);
        } else if (key == "s") {
          l.stride = parse_int(value, line_no);
        } else if (key == "p") {
          l.padding = parse_int(value, line_no);
        } else if (key == "out") {
          out = parse_int(value, line_no);
        } else if (key == "in") {
          in = parse_shape_token(value, line_no);
        } else if (key == "quant") {
          q = parse_quant_token(value, line_no);
          any_quant = true;
        } else {
          fail(ErrorKind::kMalformedDescriptor, "unknown layer attribute '" + std::string(key) + "'" + where);
        }
      }
      layers.push_back(l);
      declared_inputs.push_back(in);
      declared_out.push_back(out);
      quant.push_back(q);
    } else {
      fail(ErrorKind::kMalformedDescriptor, "unknown directive '" + std::string(tok[0]) + "'" + where);
    }
    if (end == text.size()) break;
  }
  if (!saw_format) fail(ErrorKind::kMalformedDescriptor, "missing format line");
  if (!saw_input) fail(ErrorKind::kMalformedDescriptor, "missing input line");
  if (!saw_classes) fail(ErrorKind::kMalformedDescriptor, "missing classes line");

  // Chain shapes: each layer's input comes from the previous output unless declared.
  Shape3 cur = net.input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    LayerSpec& l = layers[i];
    Shape3 in = declared_inputs[i].value_or(cur);
    l.in_height = in.height;
    l.in_width = in.width;
    l.in_channels = in.channels;
    if (declared_out[i]) {
      l.out_channels = *declared_out[i];
    } else if (l.is_channelwise()) {
      l.out_channels = l.in_channels;
    } else {
      fail(ErrorKind::kMalformedDescriptor, layer_context(i) + ": out= is required for " +
                                                std::string(layer_kind_keyword(l.kind)));
    }
    validate_layer(l, i);
    cur = Shape3{l.out_height(), l.out_width(), l.out_channels};
  }
  net.layers = std::move(layers);
  if (any_quant) {
    net.quant.resize(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      if (!net.layers[i].has_weights()) {
        net.quant[i] = LayerQuant{Arith::kNone, 0};
      } else {
        net.quant[i] = quant[i].value_or(LayerQuant{Arith::kFixed, 8});
      }
    }
  }
  net.validate();
  return net;
}

std::string format_descriptor(const NetworkSpec& net) {
  std::ostringstream os;
  os << "format flatstream-net " << kDescriptorVersion << "\n";
  os << "name " << net.name << "\n";
  os << "input " << net.input.height << " " << net.input.width << " " << net.input.channels << "\n";
  os << "classes " << net.class_count << "\n";
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    os << "layer " << layer_kind_keyword(l.kind) << " k=" << l.kernel << " s=" << l.stride << " p=" << l.padding
       << " in=" << l.in_height << "x" << l.in_width << "x" << l.in_channels << " out=" << l.out_channels;
    if (l.has_bn) os << " bn";
    if (l.has_relu) os << " relu";
    if (!net.quant.empty() && l.has_weights()) {
      os << " quant=" << arith_name(net.quant[i].arith) << ":" << net.quant[i].bits;
    }
    os << "\n";
  }
  return os.str();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

NetworkSpec read_descriptor(const std::filesystem::path& path) { return parse_descriptor(read_file(path)); }

std::size_t blob_float_count(const NetworkSpec& net) {
  std::size_t n = 0;
  for (const LayerSpec& l : net.layers) n += l.parameter_count();
  return n;
}

namespace {

float read_f32_le(const char* p) {
  std::uint32_t u = 0;
  for (int b = 3; b >= 0; --b) u = (u << 8) | static_cast<unsigned char>(p[b]);
  return std::bit_cast<float>(u);
}

void append_f32_le(std::string& out, float value) {
  std::uint32_t u = std::bit_cast<std::uint32_t>(value);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
}

}  // namespace

std::vector<LayerParams> parse_weight_blob(const NetworkSpec& net, std::string_view bytes) {
  const std::size_t expected = blob_float_count(net) * 4;
  if (bytes.size() != expected) {
    fail(ErrorKind::kBlobSizeMismatch,
         "weight blob has " + std::to_string(bytes.size()) + " bytes, expected " + std::to_string(expected));
  }
  std::vector<LayerParams> params(net.layers.size());
  std::size_t offset = 0;
  auto take = [&](std::size_t count) {
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) {
      v[i] = read_f32_le(bytes.data() + offset);
      offset += 4;
      if (!std::isfinite(v[i])) fail(ErrorKind::kMalformedDescriptor, "weight blob holds a non-finite value");
    }
    return v;
  };
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (!l.has_weights()) continue;
    params[i].weights = RealTensor(l.weight_shape(), take(l.weight_count()));
    if (l.has_bn) {
      const auto c = static_cast<std::size_t>(l.out_channels);
      params[i].gamma = take(c);
      params[i].beta = take(c);
      params[i].mean = take(c);
      params[i].sigma = take(c);
    }
  }
  return params;
}

std::string serialize_weight_blob(const NetworkSpec& net, const std::vector<LayerParams>& params) {
  if (params.size() != net.layers.size()) fail(ErrorKind::kInconsistentInputs, "parameter list does not match network");
  std::string out;
  out.reserve(blob_float_count(net) * 4);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (!l.has_weights()) continue;
    const LayerParams& p = params[i];
    if (p.weights.size() != l.weight_count()) fail(ErrorKind::kInconsistentInputs, layer_context(i) + ": weight count");
    for (double v : p.weights.data) append_f32_le(out, static_cast<float>(v));
    if (l.has_bn) {
      for (const auto* vec : {&p.gamma, &p.beta, &p.mean, &p.sigma}) {
        if (vec->size() != static_cast<std::size_t>(l.out_channels)) {
          fail(ErrorKind::kInconsistentInputs, layer_context(i) + ": BN vector length");
        }
        for (double v : *vec) append_f32_le(out, static_cast<float>(v));
      }
    }
  }
  return out;
}

Model load_model(const std::filesystem::path& descriptor_path, const std::filesystem::path& weights_path) {
  Model m;
  m.net = read_descriptor(descriptor_path);
  m.params = parse_weight_blob(m.net, read_file(weights_path));
  return m;
}

std::vector<LayerParams> synthesize_params(const NetworkSpec& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LayerParams> params(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (!l.has_weights()) continue;
    const double stddev = std::sqrt(2.0 / static_cast<double>(l.fan_in()));
    std::normal_distribution<double> normal(0.0, stddev);
    std::vector<double> w(l.weight_count());
    for (double& v : w) v = static_cast<double>(static_cast<float>(normal(rng)));
    params[i].weights = RealTensor(l.weight_shape(), std::move(w));
    if (l.has_bn) {
      std::uniform_real_distribution<double> around_one(0.75, 1.25);
      std::uniform_real_distribution<double> small(-0.1, 0.1);
      std::uniform_real_distribution<double> shift(0.0, 0.5);
      const auto c = static_cast<std::size_t>(l.out_channels);
      auto fill = [&](auto& dist) {
        std::vector<double> v(c);
        for (double& x : v) x = static_cast<double>(static_cast<float>(dist(rng)));
        return v;
      };
      params[i].gamma = fill(around_one);
      params[i].beta = fill(shift);
      params[i].mean = fill(small);
      params[i].sigma = fill(around_one);
    }
  }
  return params;
}

QuantConfig initial_quant_config(const NetworkSpec& net) {
  QuantConfig q(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    q[i] = net.layers[i].has_weights() ? LayerQuant{Arith::kFixed, 8} : LayerQuant{Arith::kNone, 0};
  }
  return q;
}

}  // namespace flatstream
