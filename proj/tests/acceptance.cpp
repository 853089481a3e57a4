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

// Acceptance checks: one PASS/FAIL line per criterion, exit status 0 iff all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "flatstream/cost_model.hpp"
#include "flatstream/error.hpp"
#include "flatstream/finetune.hpp"
#include "flatstream/golden_engine.hpp"
#include "flatstream/partition.hpp"
#include "flatstream/planner.hpp"
#include "flatstream/quantized_model.hpp"
#include "flatstream/rtl_emitter.hpp"
#include "flatstream/search.hpp"
#include "flatstream/stream_sim.hpp"
#include "support/test_support.hpp"

using namespace flatstream;
namespace fs = std::filesystem;

namespace {

constexpr double kClockMhz = 156.0;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "first failure: " << what << "; ";
    pass = pass && ok;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string squeeze(const std::string& cell) {
  const auto b = cell.find_first_not_of(' ');
  const auto e = cell.find_last_not_of(' ');
  return b == std::string::npos ? "" : cell.substr(b, e - b + 1);
}

QuantizedModel mobilenet_model(const std::string& file) {
  const NetworkSpec net = testing::load_fixture_net(file);
  return quantize_model(net, synthesize_params(net, 1), net.quant);
}

void criterion_1(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const NetworkSpec net = testing::load_fixture_net("mobilenet_v1.net");
  const std::string text = format_plan(net, match_throughput(net, Ipp::parse("1")));
  const double elapsed = seconds_since(t0);
  std::ifstream reference(testing::source_path("tests/golden/mobilenet_unroll_table.txt"));
  std::istringstream ours(text);
  std::string line;
  std::getline(ours, line);
  std::getline(ours, line);
  int rows = 0, deviations = 0;
  for (std::string want; std::getline(reference, want);) {
    if (want.empty()) continue;
    ++rows;
    if (!std::getline(ours, line)) {
      ++deviations;
      continue;
    }
    std::istringstream ls(line);
    std::vector<std::string> cells;
    for (std::string c; std::getline(ls, c, '|');) cells.push_back(squeeze(c));
    if (cells.size() < 4 || cells[0] + " | " + cells[1] + " | " + cells[2] + " | " + cells[3] != want) ++deviations;
  }
  o.require(rows == 21, "reference table has 21 rows");
  o.require(deviations == 0, "row deviations");
  o.require(elapsed < 1.0, "runtime under 1 s");
  o.detail << rows << " rows, " << deviations << " deviations, " << elapsed << " s";
}

void criterion_2(Outcome& o) {
  const QuantizedModel small = mobilenet_model("mobilenet_v1_56.net");
  const SimReport s = simulate(small, match_throughput(small.net, Ipp{1}), {random_image(small.net.input, 1)});
  o.require(s.cycles_input_consume == 3136 && s.stall_count == 0, "56x56 consumes 3136 cycles without stalls");
  o.require(s.outputs[0] == forward_quant(small, random_image(small.net.input, 1)).layer_outputs.back(),
            "56x56 output matches the golden engine");

  const QuantizedModel full = mobilenet_model("mobilenet_v1.net");
  SimOptions timing;
  timing.compute_values = false;
  const SimReport f = simulate(full, match_throughput(full.net, Ipp{1}), {random_image(full.net.input, 1)}, timing);
  const double fps = frames_per_second(f.cycles_input_consume, kClockMhz);
  o.require(f.cycles_input_consume == 50176 && f.stall_count == 0, "224x224 consumes 50176 cycles without stalls");
  o.require(std::fabs(fps - 3109.0) <= 1.0, "3109 +- 1 fps at 156 MHz");
  o.detail << "56x56: " << s.cycles_input_consume << " cycles, 224x224: " << f.cycles_input_consume
           << " cycles, stalls " << f.stall_count << ", " << fps << " fps at " << kClockMhz << " MHz";
}

void criterion_3(Outcome& o) {
  const QuantizedModel full = mobilenet_model("mobilenet_v1.net");
  const std::int64_t frame = 224 * 224;
  SimOptions opts;
  opts.compute_values = false;
  opts.window_begin = frame;
  opts.window_end = 2 * frame;
  std::vector<ActTensor> images;
  for (int k = 0; k < 3; ++k) images.push_back(random_image(full.net.input, static_cast<std::uint64_t>(k)));
  const SimReport r = simulate(full, match_throughput(full.net, Ipp{1}), images, opts);
  const UtilizationSummary u = measure_utilization(full.net, r, true);
  o.require(u.utilization >= 0.74 && u.utilization <= 0.94, "utilization in [0.74, 0.94]");
  o.detail << "utilization " << u.utilization << " over cycles [" << frame << ", " << 2 * frame << "); all layers "
           << u.utilization_all_layers << "; convention: " << u.convention;
}

void criterion_4(Outcome& o) {
  int nets = 0, images = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const auto r = testing::random_network(seed);
    const GoldenEngine golden(r.model);
    std::vector<ActTensor> batch{random_image(r.net.input, seed), random_image(r.net.input, seed + 1000)};
    const SimReport s = simulate(r.model, r.plan, batch);
    bool ok = s.outputs.size() == batch.size();
    for (std::size_t i = 0; ok && i < batch.size(); ++i) {
      const ForwardResult f = golden.run(batch[i]);
      const testing::OracleForward d = testing::dyadic_reference(r.model, batch[i]);
      ok = ok && s.outputs[i] == f.layer_outputs.back() && s.logits[i] == f.logits;
      for (std::size_t l = 0; ok && l < d.codes.size(); ++l) ok = f.layer_outputs[l].codes == d.codes[l];
      for (std::size_t j = 0; ok && j < d.logits.size(); ++j) {
        ok = std::ldexp(static_cast<double>(f.logits[j]), -f.logit_point) == d.logits[j];
      }
      ++images;
    }
    o.require(ok, "random network seed " + std::to_string(seed));
    ++nets;
  }
  o.detail << nets << " networks, " << images << " images, simulator = golden = dyadic oracle";
}

void criterion_5(Outcome& o) {
  constexpr int kSamples = 10000;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> log_mag(-10.0, 3.0);
  auto weight = [&] {
    const double m = std::exp2(log_mag(rng));
    return rng() % 2 ? -m : m;
  };
  int idem = 0, fixed_err = 0, shift_err = 0, nearest = 0, bn = 0;
  for (int i = 0; i < kSamples; ++i) {
    const double w = weight();
    const int n = 2 + i % 7;
    const WeightFormat fs = ShiftLayerParams{n, 4 + i % 4};
    const WeightFormat ff = FixedFormat{n, i % 8};
    for (const WeightFormat& f : {fs, ff}) {
      const std::uint32_t c = quantize_weight(w, f);
      idem += quantize_weight(decode_weight(c, f), f) == c ? 0 : 1;
      nearest += std::fabs(decode_weight(c, f) - w) == testing::nearest_distance(w, f) ? 0 : 1;
    }
    const FixedFormat f8{8, 5};
    const double wf = std::ldexp(static_cast<double>(static_cast<int>(rng() % 255) - 127) + 0.001 * (i % 997), -5);
    if (wf >= -4.0 && wf <= 127.0 / 32) {
      fixed_err += std::fabs(decode_fixed(encode_fixed(quantize_fixed(wf, f8), 8), f8) - wf) <= std::ldexp(1.0, -6)
                       ? 0
                       : 1;
    }
    const ShiftLayerParams sp{5, 10};
    const double ws = std::exp2(std::uniform_real_distribution<double>(-10.0, 4.0)(rng));
    shift_err += std::fabs(decode_shift(quantize_shift(ws, sp), sp) - ws) / ws <= 1.0 / 3.0 + 1e-15 ? 0 : 1;
    std::uniform_real_distribution<double> g(-3, 3), s(0.1, 3);
    const double gamma = g(rng), beta = g(rng), mean = g(rng), sigma = s(rng);
    const FusedAffine a = fuse_bn(gamma, beta, mean, sigma);
    const double scale = gamma / sigma;
    bn += std::fabs(a.scale_value() - scale) <= 1.0 / 512 &&
                  std::fabs(a.offset_value() - (beta - scale * mean)) <= 1.0 / 512
              ? 0
              : 1;
  }
  o.require(idem == 0, "idempotence");
  o.require(fixed_err == 0, "fixed-point error bound");
  o.require(shift_err == 0, "shift relative error bound");
  o.require(nearest == 0, "nearest codeword");
  o.require(bn == 0, "BN fusion bound");
  o.detail << kSamples << " samples per property; violations: idempotence " << idem << ", fixed " << fixed_err
           << ", shift " << shift_err << ", nearest " << nearest << ", bn " << bn;
}

struct Toy {
  NetworkSpec net;
  std::vector<LayerParams> theta;
  Dataset data;
  UnrollPlan plan;
};

Toy make_toy(std::uint64_t seed, int samples) {
  Toy t;
  t.net = testing::load_fixture_net("tiny_classifier.net");
  t.theta = synthesize_params(t.net, seed);
  SyntheticOptions so;
  so.samples = samples;
  so.shape = t.net.input;
  so.classes = t.net.class_count;
  so.seed = seed;
  t.data = synthesize_dataset(so);
  t.plan = match_throughput(t.net, Ipp{1});
  return t;
}

void criterion_6(Outcome& o) {
  const CostCoefficients coeff;
  {
    const Toy t = make_toy(1, 48);
    SearchConfig cfg;
    cfg.alpha_budget = 0.0;
    const QuantConfig q0 = initial_quant_config(t.net);
    const SearchResult r = search(t.net, t.theta, q0, cfg, t.data, t.plan, coeff);
    const double best = testing::exhaustive_min_key(t.net, q0, t.plan, coeff, cfg.bit_floor);
    o.require(std::fabs(r.cost - best) < 1e-9, "(a) zero budget matches the exhaustive minimum");
    o.detail << "(a) search " << r.cost << " vs exhaustive " << best << "; ";
  }
  int violations = 0;
  std::mt19937_64 rng(6);
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const Toy t = make_toy(seed, 48);
    SearchConfig cfg;
    cfg.alpha_budget = std::uniform_real_distribution<double>(0.3, 1.0)(rng);
    cfg.epochs = 1;
    cfg.seed = seed;
    const QuantConfig q0 = initial_quant_config(t.net);
    const SearchResult r = search(t.net, t.theta, q0, cfg, t.data, t.plan, coeff);
    std::size_t bound = 0;
    for (const LayerQuant& l : q0) {
      if (l.arith != Arith::kNone) bound += static_cast<std::size_t>(l.bits - cfg.bit_floor) + 2;
    }
    double prev = r.trace.initial_cost;
    bool ok = r.trace.steps.size() <= bound;
    for (const SearchStep& s : r.trace.steps) {
      if (!s.accepted) continue;
      ok = ok && s.cost_after < prev && s.alpha >= cfg.alpha_budget;
      prev = s.cost_after;
    }
    violations += ok && prev == r.cost ? 0 : 1;
  }
  o.require(violations == 0, "(b) monotone accepted cost and step bound");
  o.detail << "(b) 50 seeded runs, " << violations << " violations; ";
  {
    const Toy t = make_toy(3, 48);
    SearchConfig cfg;
    const SearchResult full = search(t.net, t.theta, initial_quant_config(t.net), cfg, t.data, t.plan, coeff);
    bool ok = !full.trace.steps.empty() && full.trace.steps[0].accepted;
    if (ok) {
      cfg.h_budget = full.trace.steps[0].cost_after;
      const SearchResult early = search(t.net, t.theta, initial_quant_config(t.net), cfg, t.data, t.plan, coeff);
      ok = early.trace.early_exit && early.trace.steps.size() == 1;
    }
    o.require(ok, "(c) early exit at the first accepted cost");
    o.detail << "(c) early exit " << (ok ? "triggered" : "missing");
  }
}

void criterion_7(Outcome& o) {
  const Toy t = make_toy(1, 128);
  QuantConfig q = initial_quant_config(t.net);
  q[0] = LayerQuant{Arith::kShift, 3};
  q[2] = LayerQuant{Arith::kFixed, 3};
  FinetuneOptions e0;
  FinetuneOptions e3;
  e3.epochs = 3;
  e3.seed = 1;
  const double a0 = finetune_ste(t.net, t.theta, q, t.data, e0).alpha.top1;
  const double a3 = finetune_ste(t.net, t.theta, q, t.data, e3).alpha.top1;
  o.require(a3 > a0, "E=3 beats E=0");
  o.detail << "top-1 E=0 " << a0 << ", E=3 " << a3;
}

void criterion_8(Outcome& o) {
  const QuantizedModel m = mobilenet_model("mobilenet_v1.net");
  const UnrollPlan plan = match_throughput(m.net, Ipp{1});
  const HwCost cost = hwcost(m.net, m.config(), plan, CostCoefficients{});
  CostReport first = unlimited_budget();
  first.luts = cost.total.luts * 0.5;
  const std::int64_t link = link_cycles(0.0013, kClockMhz);
  const PartitionPlan p = partition(m.net, plan, cost.per_layer, {first, unlimited_budget()}, link);
  bool contiguous = p.devices.size() == 2 && p.devices[0].first_layer == 0 &&
                    p.devices[0].end_layer == p.devices[1].first_layer &&
                    p.devices[1].end_layer == m.net.layers.size();
  o.require(contiguous && p.cuts.size() == 1, "two contiguous devices");
  o.require(link == 203 && p.added_latency == link, "added latency equals the link cycles");
  if (p.cuts.size() != 1) return;
  std::vector<ActTensor> images{random_image(m.net.input, 1), random_image(m.net.input, 2)};
  SimOptions base;
  base.compute_values = false;
  SimOptions linked = base;
  linked.link_delays.assign(m.net.layers.size() - 1, 0);
  linked.link_delays[p.cuts[0]] = static_cast<int>(link);
  const SimReport a = simulate(m, plan, images, base);
  const SimReport b = simulate(m, plan, images, linked);
  o.require(b.first_output_cycle - a.first_output_cycle == link, "simulated output delay equals the link cycles");
  o.require(b.cycles_input_consume == a.cycles_input_consume && b.stall_count == 0, "throughput unchanged");
  o.detail << "cut after layer " << p.cuts[0] << ", link " << link << " cycles, simulated delay "
           << b.first_output_cycle - a.first_output_cycle << ", input cycles " << a.cycles_input_consume << " -> "
           << b.cycles_input_consume;
}

void criterion_9(Outcome& o) {
  int golden_files = 0;
  for (const char* name : {"identity", "toy2", "tiny_classifier"}) {
    const NetworkSpec net = testing::load_fixture_net(std::string(name) + ".net");
    const QuantizedModel m =
        quantize_model(net, synthesize_params(net, 7), net.quant.empty() ? initial_quant_config(net) : net.quant);
    for (const RtlFile& f : render_rtl(m, match_throughput(net, Ipp{1})).files) {
      const fs::path g = testing::source_path("tests/golden/rtl") / name / f.name;
      o.require(fs::exists(g) && read_file(g) == f.contents, std::string("golden ") + name + "/" + f.name);
      ++golden_files;
    }
  }
  const QuantizedModel m = mobilenet_model("mobilenet_v1.net");
  const UnrollPlan plan = match_throughput(m.net, Ipp{1});
  const RtlArtifact art = render_rtl(m, plan);
  const Manifest man = parse_manifest(art.files.back().contents);
  int width_mismatch = 0, hex_mismatch = 0;
  for (std::size_t i = 0; i < m.net.layers.size(); ++i) {
    const LayerSpec& l = m.net.layers[i];
    const LayerUnroll& u = plan.layers[i];
    const int k2 = l.kernel * l.kernel;
    const int bus = l.kind == LayerKind::kAvgPool         ? 0
                    : l.kind == LayerKind::kDepthwiseConv ? u.unroll_in * k2 * m.layers[i].quant.bits
                                                          : u.unroll_in * l.out_channels * k2 * m.layers[i].quant.bits;
    const ManifestLayer& e = man.layers.at(i);
    width_mismatch += e.widths.act_in == u.unroll_in * 8 && e.widths.act_out == u.unroll_out * 8 &&
                              e.widths.weight_bus == bus
                          ? 0
                          : 1;
    if (e.weights_file != "-") {
      const auto it = std::find_if(art.files.begin(), art.files.end(),
                                   [&](const RtlFile& f) { return f.name == e.weights_file; });
      hex_mismatch += it != art.files.end() && parse_weight_hex(it->contents, m.layers[i].quant.bits) ==
                                                   m.layers[i].codes
                          ? 0
                          : 1;
    }
  }
  o.require(man.layers.size() == 21 && width_mismatch == 0, "manifest widths");
  o.require(hex_mismatch == 0, "weight hex round trip");
  o.detail << golden_files << " golden files compared; " << man.layers.size() << " mobilenet layers, "
           << width_mismatch << " width mismatches, " << hex_mismatch << " hex mismatches";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"unroll table reproduction", criterion_1},
      {"latency identity and throughput", criterion_2},
      {"steady-state utilization", criterion_3},
      {"bit-exact oracle equivalence", criterion_4},
      {"quantizer properties", criterion_5},
      {"search behaviour", criterion_6},
      {"fine-tuning recovery", criterion_7},
      {"two-device partition", criterion_8},
      {"emitter stability", criterion_9},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failures += o.pass ? 0 : 1;
    std::cout << "criterion " << i + 1 << " (" << criteria[i].first << "): " << (o.pass ? "PASS" : "FAIL") << " ["
              << o.detail.str() << "] " << seconds_since(t0) << " s" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
