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

#include <cstdlib>
#include <fstream>

#include "flatstream/error.hpp"
#include "flatstream/rtl_emitter.hpp"
#include "support/test_support.hpp"

using namespace flatstream;
namespace fs = std::filesystem;

namespace {

QuantizedModel fixture_model(const std::string& name) {
  const NetworkSpec net = testing::load_fixture_net(name);
  const QuantConfig q = net.quant.empty() ? initial_quant_config(net) : net.quant;
  return quantize_model(net, synthesize_params(net, 7), q);
}

}  // namespace

TEST_CASE("emitted files match the golden copies byte for byte") {
  // FLATSTREAM_UPDATE_GOLDEN=1 rewrites the golden copies.
  const bool update = std::getenv("FLATSTREAM_UPDATE_GOLDEN") != nullptr;
  for (const char* name : {"identity", "toy2", "tiny_classifier"}) {
    const QuantizedModel m = fixture_model(std::string(name) + ".net");
    const RtlArtifact art = render_rtl(m, match_throughput(m.net, Ipp{1}));
    const fs::path dir = testing::source_path("tests/golden/rtl") / name;
    if (update) {
      fs::remove_all(dir);
      fs::create_directories(dir);
      for (const RtlFile& f : art.files) write_file(dir / f.name, f.contents);
    }
    std::size_t on_disk = 0;
    for (const auto& e : fs::directory_iterator(dir)) on_disk += e.is_regular_file() ? 1 : 0;
    CHECK(on_disk == art.files.size());
    for (const RtlFile& f : art.files) {
      INFO(name << "/" << f.name);
      CHECK(read_file(dir / f.name) == f.contents);
    }
  }
}

TEST_CASE("rendering is deterministic") {
  const QuantizedModel m = fixture_model("toy2.net");
  const UnrollPlan plan = match_throughput(m.net, Ipp{2});
  const RtlArtifact a = render_rtl(m, plan);
  const RtlArtifact b = render_rtl(m, plan);
  REQUIRE(a.files.size() == b.files.size());
  for (std::size_t i = 0; i < a.files.size(); ++i) CHECK(a.files[i].contents == b.files[i].contents);
  CHECK(a.files.back().name == "manifest.txt");
}

TEST_CASE("manifest port widths equal plan-derived widths for every mobilenet layer") {
  const NetworkSpec net = testing::load_fixture_net("mobilenet_v1_56.net");
  const QuantizedModel m = quantize_model(net, synthesize_params(net, 1), net.quant);
  const UnrollPlan plan = match_throughput(net, Ipp{1});
  const RtlArtifact art = render_rtl(m, plan);
  const Manifest man = parse_manifest(art.files.back().contents);
  REQUIRE(man.layers.size() == net.layers.size());
  CHECK(man.act_in_width == plan.layers.front().unroll_in * 8);
  CHECK(man.act_out_width == plan.layers.back().unroll_out * 8);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    const LayerUnroll& u = plan.layers[i];
    const ManifestLayer& e = man.layers[i];
    INFO("layer " << i);
    CHECK(e.unroll_in == u.unroll_in);
    CHECK(e.unroll_out == u.unroll_out);
    CHECK(e.widths.act_in == u.unroll_in * 8);
    CHECK(e.widths.act_out == u.unroll_out * 8);
    const int lanes = l.kind == LayerKind::kAvgPool         ? 0
                      : l.kind == LayerKind::kDepthwiseConv ? u.unroll_in * l.kernel * l.kernel
                                                            : u.unroll_in * l.out_channels * l.kernel * l.kernel;
    CHECK(e.widths.weight_bus == lanes * m.layers[i].quant.bits);
    if (i + 1 < net.layers.size()) CHECK(e.widths.act_out == man.layers[i + 1].widths.act_in);
  }
}

TEST_CASE("weight hex round trips to checkpoint codewords") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto r = testing::random_network(seed);
    const RtlArtifact art = render_rtl(r.model, r.plan);
    const Manifest man = parse_manifest(art.files.back().contents);
    for (const ManifestLayer& e : man.layers) {
      const QuantizedLayer& ql = r.model.layers[e.index];
      if (e.weights_file == "-") {
        CHECK(ql.codes.empty());
        continue;
      }
      const auto it = std::find_if(art.files.begin(), art.files.end(),
                                   [&](const RtlFile& f) { return f.name == e.weights_file; });
      REQUIRE(it != art.files.end());
      CHECK(parse_weight_hex(it->contents, ql.quant.bits) == ql.codes);
      CHECK(e.weight_count == ql.codes.size());
      CHECK(e.scale_exponent == ql.scale_exponent);
    }
  }
}

TEST_CASE("hex digits per codeword") {
  QuantizedLayer l;
  l.quant = {Arith::kFixed, 5};
  l.codes = {0x1f, 0x00, 0x0a};
  CHECK(format_weight_hex(l) == "1f\n00\n0a\n");
  l.quant = {Arith::kShift, 3};
  l.codes = {3, 4};
  CHECK(format_weight_hex(l) == "3\n4\n");
  CHECK_THROWS_AS(parse_weight_hex("1f\n", 3), Error);
  CHECK_THROWS_AS(parse_weight_hex("zz\n", 8), Error);
}

TEST_CASE("emit refuses to overwrite unless forced, and force keeps foreign files") {
  const QuantizedModel m = fixture_model("toy2.net");
  const UnrollPlan plan = match_throughput(m.net, Ipp{1});
  const fs::path dir = testing::scratch_dir("emit");
  emit_rtl(m, plan, dir / "rtl", false);
  try {
    emit_rtl(m, plan, dir / "rtl", false);
    FAIL("expected OutputExists");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kOutputExists);
  }
  write_file(dir / "rtl" / "notes.txt", "keep");
  write_file(dir / "rtl" / "weights_9.hex", "stale");
  const RtlArtifact art = emit_rtl(m, plan, dir / "rtl", true);
  CHECK(fs::exists(dir / "rtl" / "notes.txt"));
  CHECK_FALSE(fs::exists(dir / "rtl" / "weights_9.hex"));
  for (const RtlFile& f : art.files) CHECK(read_file(dir / "rtl" / f.name) == f.contents);
}

TEST_CASE("inconsistent inputs are rejected") {
  QuantizedModel m = fixture_model("toy2.net");
  UnrollPlan plan = match_throughput(m.net, Ipp{1});
  plan.layers[1].unroll_in = 3;
  CHECK_THROWS_AS(render_rtl(m, plan), Error);
  plan = match_throughput(m.net, Ipp{1});
  m.layers[1].codes.pop_back();
  CHECK_THROWS_AS(render_rtl(m, plan), Error);
}

TEST_CASE("templates") {
  CHECK(render_template("a{{X}}b{{Y}}", {{"X", "1"}, {"Y", "2"}}) == "a1b2");
  CHECK_THROWS_AS(render_template("{{Z}}", {{"X", "1"}}), Error);
  CHECK_THROWS_AS(render_template("{{X", {{"X", "1"}}), Error);
  CHECK_FALSE(embedded_template("top.sv.in").empty());
  CHECK_THROWS_AS(embedded_template("missing.sv.in"), Error);
}
