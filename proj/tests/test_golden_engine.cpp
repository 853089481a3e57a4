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

#include <cmath>

#include "flatstream/error.hpp"
#include "flatstream/golden_engine.hpp"
#include "support/test_support.hpp"

using namespace flatstream;

TEST_CASE("golden engine equals the dyadic double oracle on random networks") {
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const auto r = testing::random_network(seed);
    const GoldenEngine engine(r.model);
    for (std::uint64_t k = 0; k < 2; ++k) {
      const ActTensor image = random_image(r.net.input, seed * 31 + k);
      const ForwardResult f = engine.run(image);
      const testing::OracleForward o = testing::dyadic_reference(r.model, image);
      REQUIRE(f.layer_outputs.size() == o.codes.size());
      for (std::size_t l = 0; l < o.codes.size(); ++l) {
        INFO("seed " << seed << " layer " << l);
        REQUIRE(f.layer_outputs[l].codes == o.codes[l]);
      }
      REQUIRE(f.logits.size() == o.logits.size());
      for (std::size_t j = 0; j < o.logits.size(); ++j) {
        REQUIRE(std::ldexp(static_cast<double>(f.logits[j]), -f.logit_point) == o.logits[j]);
      }
    }
  }
}

TEST_CASE("identity network passes activations through") {
  const NetworkSpec net = testing::load_fixture_net("identity.net");
  std::vector<LayerParams> params = synthesize_params(net, 1);
  params[0].weights.data.assign(1, 1.0);
  const QuantizedModel m = quantize_model(net, params, net.quant);
  const ActTensor image = random_image(net.input, 5);
  const ForwardResult f = forward_quant(m, image);
  CHECK(f.layer_outputs.back() == image);
}

TEST_CASE("datapath points follow the layer format") {
  const NetworkSpec net = testing::load_fixture_net("toy2.net");
  const QuantizedModel m = quantize_model(net, synthesize_params(net, 2), net.quant);
  const LayerDatapath shift = build_datapath(net.layers[0], m.layers[0]);
  CHECK(shift.acc_point == 5 + m.layers[0].scale_exponent - shift.exponent_floor);
  CHECK(shift.out_point == std::max(shift.acc_point + 8, 8));
  const LayerDatapath fixed = build_datapath(net.layers[1], m.layers[1]);
  CHECK(fixed.acc_point == 5 + m.layers[1].scale_exponent);
  CHECK(fixed.out_point == fixed.acc_point);
}

TEST_CASE("accumulator certificate rejects wide shift layers") {
  const NetworkSpec net = parse_descriptor(
      "format flatstream-net 1\nname wide\ninput 2 2 2\nclasses 4\nlayer conv k=1 s=1 p=0 out=1 quant=shift:8\n");
  QuantizedModel m = quantize_model(net, synthesize_params(net, 1), net.quant);
  m.layers[0].scale_exponent = 0;
  m.layers[0].codes[0] = 120;  // 2^120 next to 2^0 spans far beyond 32 bits
  m.layers[0].codes[1] = 0;
  try {
    GoldenEngine engine(m);
    FAIL("expected AccumulatorOverflowRisk");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kAccumulatorOverflowRisk);
  }
}

TEST_CASE("round_div rounds half away from zero") {
  CHECK(round_div(5, 2) == 3);
  CHECK(round_div(-5, 2) == -3);
  CHECK(round_div(4, 3) == 1);
  CHECK(round_div(-4, 3) == -1);
  CHECK(round_div(0, 49) == 0);
}

TEST_CASE("evaluation counts ranks and is thread-count invariant") {
  const NetworkSpec net = testing::load_fixture_net("tiny_classifier.net");
  const QuantizedModel m = quantize_model(net, synthesize_params(net, 3), initial_quant_config(net));
  SyntheticOptions so;
  so.samples = 50;
  so.shape = net.input;
  so.classes = 2;
  const Dataset d = synthesize_dataset(so);
  const EvalResult one = evaluate(m, d, 1);
  CHECK(one.sample_count == 50u);
  CHECK(one.top5 == 1.0);
  CHECK(evaluate(m, d, 3) == one);
  CHECK(label_rank({3, 9, 9, 1}, 2) == 1);
  CHECK(label_rank({3, 9, 9, 1}, 1) == 0);
  CHECK(label_rank({3, 9, 9, 1}, 3) == 3);
  CHECK_THROWS_AS(evaluate(m, Dataset{net.input, 2, {}, {}}, 1), Error);
}
