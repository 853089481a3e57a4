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
#include <numeric>

#include "flatstream/error.hpp"
#include "flatstream/finetune.hpp"
#include "support/test_support.hpp"

using namespace flatstream;

namespace {

Dataset toy_data(const NetworkSpec& net, std::uint64_t seed, int samples = 64) {
  SyntheticOptions so;
  so.samples = samples;
  so.shape = net.input;
  so.classes = net.class_count;
  so.seed = seed;
  return synthesize_dataset(so);
}

}  // namespace

TEST_CASE("analytic gradient matches central differences with identity quantizers") {
  const NetworkSpec net = testing::load_fixture_net("tiny_classifier.net");
  const auto theta = synthesize_params(net, 5);
  const Dataset data = toy_data(net, 5, 12);
  std::vector<std::size_t> batch(data.size());
  std::iota(batch.begin(), batch.end(), 0);
  const QuantConfig q = initial_quant_config(net);
  const LossGradient g = loss_and_gradient(net, theta, q, data, batch, true);
  int compared = 0;
  for (std::size_t layer : {std::size_t{0}, std::size_t{2}}) {
    for (std::size_t j = 0; j < theta[layer].weights.size(); ++j) {
      const double fd = testing::finite_difference(net, theta, q, data, batch, layer, j, 1e-6);
      INFO("layer " << layer << " weight " << j);
      CHECK(g.weight_grads[layer][j] == doctest::Approx(fd).epsilon(1e-4).scale(1e-6));
      ++compared;
    }
  }
  CHECK(compared > 0);
}

TEST_CASE("fine-tuning recovers accuracy lost to coarse quantization") {
  const NetworkSpec net = testing::load_fixture_net("tiny_classifier.net");
  const auto theta = synthesize_params(net, 1);
  const Dataset data = toy_data(net, 1, 128);
  QuantConfig q = initial_quant_config(net);
  q[0] = LayerQuant{Arith::kShift, 3};
  q[2] = LayerQuant{Arith::kFixed, 3};
  FinetuneOptions none;
  none.epochs = 0;
  FinetuneOptions three;
  three.epochs = 3;
  three.seed = 1;
  const FinetuneResult r0 = finetune_ste(net, theta, q, data, none);
  const FinetuneResult r3 = finetune_ste(net, theta, q, data, three);
  CHECK(r3.alpha.top1 > r0.alpha.top1);
}

TEST_CASE("fine-tuning is deterministic in its seed") {
  const NetworkSpec net = testing::load_fixture_net("tiny_classifier.net");
  const auto theta = synthesize_params(net, 8);
  const Dataset data = toy_data(net, 8);
  FinetuneOptions o;
  o.epochs = 2;
  o.seed = 99;
  const QuantConfig q = initial_quant_config(net);
  const FinetuneResult a = finetune_ste(net, theta, q, data, o);
  o.jobs = 2;
  const FinetuneResult b = finetune_ste(net, theta, q, data, o);
  CHECK(a.params[0].weights.data == b.params[0].weights.data);
  CHECK(a.alpha == b.alpha);
}

TEST_CASE("diverging fine-tuning reports NonFiniteLoss") {
  const NetworkSpec net = testing::load_fixture_net("tiny_classifier.net");
  const auto theta = synthesize_params(net, 9);
  const Dataset data = toy_data(net, 9);
  FinetuneOptions o;
  o.epochs = 50;
  o.learning_rate = 1e300;
  try {
    finetune_ste(net, theta, initial_quant_config(net), data, o);
    FAIL("expected NonFiniteLoss");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNonFiniteLoss);
  }
}

TEST_CASE("empty datasets are rejected") {
  const NetworkSpec net = testing::load_fixture_net("tiny_classifier.net");
  FinetuneOptions o;
  CHECK_THROWS_AS(finetune_ste(net, synthesize_params(net, 1), initial_quant_config(net), Dataset{}, o), Error);
}
