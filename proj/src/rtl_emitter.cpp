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

#include "flatstream/rtl_emitter.hpp"

#include <algorithm>
#include <cstdio>
#include <regex>
#include <sstream>

#include "flatstream/error.hpp"
#include "flatstream/golden_engine.hpp"
#include "flatstream/version.hpp"

namespace flatstream {
namespace {

struct TemplateEntry {
  std::string_view name;
  std::string_view body;
};

constexpr TemplateEntry kTemplates[] = {
#include "flatstream_templates.inc"
};

using Values = std::vector<std::pair<std::string, std::string>>;

std::string hex16(std::int16_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%s16'sd%d", v < 0 ? "-" : "", v < 0 ? -static_cast<int>(v) : static_cast<int>(v));
  return buf;
}

std::string table(const char* name, const std::vector<std::int16_t>& v) {
  std::ostringstream os;
  os << "  localparam logic signed [15:0] " << name << " [C_OUT] = '{";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i % 8 == 0) os << "\n    ";
    os << hex16(v[i]);
    if (i + 1 < v.size()) os << (i % 8 == 7 ? "," : ", ");
  }
  os << "\n  };\n";
  return os.str();
}

std::string render_layer(std::size_t index, const LayerSpec& l, const LayerUnroll& u, const QuantizedLayer& ql) {
  const PortWidths pw = port_widths(l, u, ql.quant);
  const std::string module = layer_module_name(index, l);
  const std::int64_t lb_pixels = static_cast<std::int64_t>(l.kernel + l.stride) * l.in_width + l.kernel;
  Values v = {
      {"MODULE", module},
      {"VERSION", std::string(kToolVersion)},
      {"TYPE", layer_type_label(l)},
      {"C", std::to_string(l.in_channels)},
      {"C_OUT", std::to_string(l.out_channels)},
      {"K", std::to_string(l.kernel)},
      {"S", std::to_string(l.stride)},
      {"P", std::to_string(l.padding)},
      {"H", std::to_string(l.in_height)},
      {"W", std::to_string(l.in_width)},
      {"U", std::to_string(u.unroll_in)},
      {"U_OUT", std::to_string(u.unroll_out)},
      {"IN_PHASES", std::to_string(input_phases(l, u))},
      {"OUT_PHASES", std::to_string(output_phases(l, u))},
      {"LB_PIXELS", std::to_string(lb_pixels)},
      {"ACT_IN_WIDTH", std::to_string(pw.act_in)},
      {"ACT_OUT_WIDTH", std::to_string(pw.act_out)},
  };
  if (l.kind == LayerKind::kAvgPool) return render_template(embedded_template("layer_pool.sv.in"), v);

  const LayerDatapath dp = build_datapath(l, ql);
  const bool shift = ql.quant.arith == Arith::kShift;
  const std::int64_t k2 = static_cast<std::int64_t>(l.kernel) * l.kernel;
  const std::int64_t lanes = l.kind == LayerKind::kDepthwiseConv ? u.unroll_in * k2
                                                                 : static_cast<std::int64_t>(u.unroll_in) * l.out_channels * k2;
  std::string bn_table, bn_expr;
  if (l.has_bn) {
    std::vector<std::int16_t> scale, offset;
    for (const FusedAffine& a : ql.bn) {
      scale.push_back(a.scale);
      offset.push_back(a.offset);
    }
    bn_table = table("BN_SCALE", scale) + table("BN_OFFSET", offset);
    bn_expr = "((64'(acc[ch]) * BN_SCALE[ch]) <<< ACC_SHIFT) + (64'(BN_OFFSET[ch]) <<< OFF_SHIFT)";
  } else {
    bn_table = "  // No BN: accumulators are requantized directly.\n";
    bn_expr = "64'(acc[ch])";
  }
  v.insert(v.end(), {
      {"ARITH", std::string(arith_name(ql.quant.arith))},
      {"WBITS", std::to_string(ql.quant.bits)},
      {"LANE_KIND", shift ? "shift-add" : "multiply-accumulate"},
      {"LANES", std::to_string(lanes)},
      {"ACC_SHIFT", std::to_string(l.has_bn ? dp.out_point - dp.acc_point - kAffineFracBits : 0)},
      {"OFF_SHIFT", std::to_string(l.has_bn ? dp.out_point - kAffineFracBits : 0)},
      {"OUT_SHIFT", std::to_string(dp.out_point - kActivationFracBits)},
      {"E_LO", std::to_string(dp.exponent_floor)},
      {"WEIGHTS_FILE", "weights_" + std::to_string(index) + ".hex"},
      {"WEIGHT_BUS_WIDTH", std::to_string(pw.weight_bus)},
      {"BN_TABLE", bn_table},
      {"BN_EXPR", bn_expr},
  });
  std::string lane = std::string(embedded_template(shift ? "lane_shift.sv.in" : "lane_mac.sv.in"));
  while (!lane.empty() && lane.back() == '\n') lane.pop_back();
  v.emplace_back("LANE_BODY", lane);
  return render_template(embedded_template(l.kind == LayerKind::kDepthwiseConv ? "layer_dw.sv.in" : "layer_mac.sv.in"), v);
}

std::string render_top(const QuantizedModel& model, const UnrollPlan& plan) {
  const NetworkSpec& net = model.net;
  std::ostringstream wires, inst;
  for (std::size_t i = 0; i <= net.layers.size(); ++i) {
    const int width = i == 0 ? plan.layers.front().unroll_in * kActivationBits
                             : plan.layers[i - 1].unroll_out * kActivationBits;
    wires << "  logic s" << i << "_valid, s" << i << "_ready;\n";
    wires << "  logic [" << width << "-1:0] s" << i << "_data;\n";
  }
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const std::string module = layer_module_name(i, net.layers[i]);
    inst << "  " << module << " u_" << module << " (\n"
         << "    .clk(clk), .rst_n(rst_n),\n"
         << "    .in_valid(s" << i << "_valid), .in_ready(s" << i << "_ready), .in_data(s" << i << "_data),\n"
         << "    .out_valid(s" << i + 1 << "_valid), .out_ready(s" << i + 1 << "_ready), .out_data(s" << i + 1
         << "_data)\n"
         << "  );\n";
  }
  return render_template(embedded_template("top.sv.in"),
                         {{"MODULE", "top"},
                          {"NETWORK", net.name},
                          {"VERSION", std::string(kToolVersion)},
                          {"IPP_DEN", std::to_string(plan.ipp.denominator)},
                          {"ACT_IN_WIDTH", std::to_string(plan.layers.front().unroll_in * kActivationBits)},
                          {"ACT_OUT_WIDTH", std::to_string(plan.layers.back().unroll_out * kActivationBits)},
                          {"WIRES", wires.str()},
                          {"INSTANCES", inst.str()},
                          {"LAYER_COUNT", std::to_string(net.layers.size())}});
}

bool is_emitted_name(const std::string& name) {
  static const std::regex kPattern(R"((top\.sv|manifest\.txt|layer_\d+_[a-z]+\.sv|weights_\d+\.hex))");
  return std::regex_match(name, kPattern);
}

}  // namespace

std::string_view embedded_template(std::string_view name) {
  for (const TemplateEntry& t : kTemplates) {
    if (t.name == name) return t.body;
  }
  fail(ErrorKind::kInconsistentInputs, "no embedded template named " + std::string(name));
}

std::string render_template(std::string_view tmpl, const Values& values) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const std::size_t close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) fail(ErrorKind::kInconsistentInputs, "unterminated template placeholder");
    out.append(tmpl.substr(pos, open - pos));
    const std::string_view key = tmpl.substr(open + 2, close - open - 2);
    const auto it = std::find_if(values.begin(), values.end(), [&](const auto& kv) { return kv.first == key; });
    if (it == values.end()) fail(ErrorKind::kInconsistentInputs, "template placeholder {{" + std::string(key) + "}} has no value");
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

PortWidths port_widths(const LayerSpec& l, const LayerUnroll& u, const LayerQuant& q) {
  PortWidths w;
  w.act_in = u.unroll_in * kActivationBits;
  w.act_out = u.unroll_out * kActivationBits;
  const int k2 = l.kernel * l.kernel;
  if (l.kind == LayerKind::kAvgPool) {
    w.weight_bus = 0;
  } else if (l.kind == LayerKind::kDepthwiseConv) {
    w.weight_bus = u.unroll_in * k2 * q.bits;
  } else {
    w.weight_bus = u.unroll_in * l.out_channels * k2 * q.bits;
  }
  return w;
}

std::string layer_module_name(std::size_t index, const LayerSpec& l) {
  return "layer_" + std::to_string(index) + "_" + std::string(layer_kind_keyword(l.kind));
}

std::string format_weight_hex(const QuantizedLayer& ql) {
  const int digits = (ql.quant.bits + 3) / 4;
  std::string out;
  out.reserve(ql.codes.size() * static_cast<std::size_t>(digits + 1));
  char buf[16];
  for (std::uint32_t c : ql.codes) {
    std::snprintf(buf, sizeof buf, "%0*x\n", digits, c);
    out += buf;
  }
  return out;
}

std::vector<std::uint32_t> parse_weight_hex(std::string_view text, int bits) {
  std::vector<std::uint32_t> out;
  std::istringstream in{std::string(text)};
  std::string line;
  const std::size_t digits = static_cast<std::size_t>((bits + 3) / 4);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.size() != digits || line.find_first_not_of("0123456789abcdef") != std::string::npos) {
      fail(ErrorKind::kMalformedDescriptor, "bad weight hex line '" + line + "'");
    }
    const auto v = static_cast<std::uint32_t>(std::stoul(line, nullptr, 16));
    if (v >> bits) fail(ErrorKind::kMalformedDescriptor, "weight hex value exceeds the codeword width");
    out.push_back(v);
  }
  return out;
}

RtlArtifact render_rtl(const QuantizedModel& model, const UnrollPlan& plan) {
  try {
    model.validate();
    check_plan(model.net, plan);
  } catch (const Error& e) {
    fail(ErrorKind::kInconsistentInputs, std::string("cannot emit RTL: ") + e.what());
  }
  const NetworkSpec& net = model.net;
  if (net.layers.empty()) fail(ErrorKind::kInconsistentInputs, "cannot emit RTL for an empty network");
  RtlArtifact art;
  art.files.push_back({"top.sv", render_top(model, plan)});
  std::ostringstream man;
  man << "# flatstream rtl manifest 1\n";
  man << "network " << net.name << "\n";
  man << "ipp " << plan.ipp.text() << "\n";
  man << "weight_hex one codeword per line, OIHW order (depthwise C,1,K,K), ceil(bits/4) hex digits, "
         "codeword bit i is bit i of the hex value\n";
  man << "top top act_in_width " << plan.layers.front().unroll_in * kActivationBits << " act_out_width "
      << plan.layers.back().unroll_out * kActivationBits << "\n";
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    const QuantizedLayer& ql = model.layers[i];
    const PortWidths pw = port_widths(l, plan.layers[i], ql.quant);
    const std::string module = layer_module_name(i, l);
    art.files.push_back({module + ".sv", render_layer(i, l, plan.layers[i], ql)});
    std::string weights = "-";
    if (l.has_weights()) {
      weights = "weights_" + std::to_string(i) + ".hex";
      art.files.push_back({weights, format_weight_hex(ql)});
    }
    man << "layer " << i << " module " << module << " kind " << layer_kind_keyword(l.kind) << " arith "
        << arith_name(ql.quant.arith) << " bits " << ql.quant.bits << " scale_exp " << ql.scale_exponent << " U "
        << plan.layers[i].unroll_in << " U' " << plan.layers[i].unroll_out << " act_in_width " << pw.act_in
        << " act_out_width " << pw.act_out << " weight_bus_width " << pw.weight_bus << " weights " << weights
        << " weight_count " << ql.codes.size() << "\n";
  }
  for (const RtlFile& f : art.files) man << "file " << f.name << "\n";
  art.files.push_back({"manifest.txt", man.str()});
  return art;
}

RtlArtifact emit_rtl(const QuantizedModel& model, const UnrollPlan& plan, const std::filesystem::path& out_dir,
                     bool force) {
  namespace fs = std::filesystem;
  RtlArtifact art = render_rtl(model, plan);
  std::error_code ec;
  if (fs::exists(out_dir, ec)) {
    if (!fs::is_directory(out_dir, ec)) fail(ErrorKind::kOutputExists, out_dir.string() + " exists and is not a directory");
    if (!fs::is_empty(out_dir, ec)) {
      if (!force) fail(ErrorKind::kOutputExists, out_dir.string() + " is not empty (pass --force to replace)");
      for (const auto& entry : fs::directory_iterator(out_dir)) {
        if (entry.is_regular_file() && is_emitted_name(entry.path().filename().string())) fs::remove(entry.path());
      }
    }
  } else {
    fs::create_directories(out_dir, ec);
    if (ec) fail(ErrorKind::kIo, "cannot create " + out_dir.string() + ": " + ec.message());
  }
  for (const RtlFile& f : art.files) write_file(out_dir / f.name, f.contents);
  return art;
}

Manifest parse_manifest(std::string_view text) {
  Manifest m;
  std::istringstream in{std::string(text)};
  std::string line;
  auto need = [](std::istringstream& ls, const std::string& key) {
    std::string k;
    if (!(ls >> k) || k != key) fail(ErrorKind::kMalformedDescriptor, "manifest: expected '" + key + "'");
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head == "top") {
      std::string name;
      ls >> name;
      need(ls, "act_in_width");
      ls >> m.act_in_width;
      need(ls, "act_out_width");
      ls >> m.act_out_width;
    } else if (head == "layer") {
      ManifestLayer e;
      ls >> e.index;
      need(ls, "module");
      ls >> e.module;
      need(ls, "kind");
      ls >> e.kind;
      need(ls, "arith");
      ls >> e.arith;
      need(ls, "bits");
      ls >> e.bits;
      need(ls, "scale_exp");
      ls >> e.scale_exponent;
      need(ls, "U");
      ls >> e.unroll_in;
      need(ls, "U'");
      ls >> e.unroll_out;
      need(ls, "act_in_width");
      ls >> e.widths.act_in;
      need(ls, "act_out_width");
      ls >> e.widths.act_out;
      need(ls, "weight_bus_width");
      ls >> e.widths.weight_bus;
      need(ls, "weights");
      ls >> e.weights_file;
      need(ls, "weight_count");
      ls >> e.weight_count;
      if (!ls) fail(ErrorKind::kMalformedDescriptor, "manifest: bad layer line");
      m.layers.push_back(e);
    } else if (head == "file") {
      std::string f;
      ls >> f;
      m.files.push_back(f);
    }
  }
  return m;
}

}  // namespace flatstream
