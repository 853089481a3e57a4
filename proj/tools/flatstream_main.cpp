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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flatstream/cost_model.hpp"
#include "flatstream/dataset.hpp"
#include "flatstream/error.hpp"
#include "flatstream/finetune.hpp"
#include "flatstream/golden_engine.hpp"
#include "flatstream/model_ir.hpp"
#include "flatstream/partition.hpp"
#include "flatstream/planner.hpp"
#include "flatstream/quantized_model.hpp"
#include "flatstream/rtl_emitter.hpp"
#include "flatstream/search.hpp"
#include "flatstream/stream_sim.hpp"
#include "flatstream/version.hpp"
#include "json.hpp"
#include "run_manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace flatstream::cli {
namespace {

struct Globals {
  std::uint64_t seed = 1;
  int jobs = 1;
  bool json = false;
  std::string coeff;
  std::string out;
  bool force = false;
  std::string trace;
  std::string run_manifest;
};

struct Inputs {
  std::string model;
  std::string weights;
  std::string checkpoint;
  std::string plan;
  std::string ipp = "1";
  std::string data;
  std::string images;
};

constexpr int kMismatchExit = 1;

void require_fresh(const fs::path& path, bool force) {
  if (!force && fs::exists(path)) fail(ErrorKind::kOutputExists, path.string() + " exists (pass --force to replace)");
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) fail(ErrorKind::kInvalidArgument, std::string(flag) + " is required");
}

CostCoefficients coefficients(const Globals& g, RunManifest& run) {
  if (g.coeff.empty()) return CostCoefficients{};
  run.add_input(g.coeff);
  return load_coefficients(g.coeff);
}

NetworkSpec load_net(const Inputs& in, RunManifest& run) {
  require(in.model, "--model");
  run.add_input(in.model);
  return read_descriptor(in.model);
}

// Real-valued parameters come from --weights, or are synthesized from --seed.
std::vector<LayerParams> load_params(const NetworkSpec& net, const Inputs& in, const Globals& g, RunManifest& run) {
  if (in.weights.empty()) return synthesize_params(net, g.seed);
  run.add_input(in.weights);
  return parse_weight_blob(net, read_file(in.weights));
}

QuantizedModel load_checkpoint(const Inputs& in, RunManifest& run) {
  require(in.checkpoint, "--checkpoint");
  run.add_input(in.checkpoint);
  return load_quantized_checkpoint(in.checkpoint);
}

// Descriptors without quant= tokens start from the all fixed-8 configuration.
QuantConfig config_of(const NetworkSpec& net) { return net.quant.empty() ? initial_quant_config(net) : net.quant; }

UnrollPlan load_plan(const NetworkSpec& net, const Inputs& in, RunManifest& run) {
  UnrollPlan plan;
  if (!in.plan.empty()) {
    run.add_input(in.plan);
    plan = parse_plan(read_file(in.plan));
    check_plan(net, plan);
  } else {
    plan = match_throughput(net, Ipp::parse(in.ipp));
  }
  run.set_option("ipp", plan.ipp.text());
  return plan;
}

Dataset load_data(const NetworkSpec& net, const Inputs& in, RunManifest& run) {
  require(in.data, "--data");
  run.add_input(in.data);
  Dataset d = load_dataset(in.data);
  if (d.shape != net.input) fail(ErrorKind::kShapeMismatch, "dataset image shape differs from the network input");
  return d;
}

void emit_text(const Globals& g, RunManifest& run, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  require_fresh(g.out, g.force);
  write_file(g.out, text);
  run.add_output(g.out);
}

void print_result(const Globals& g, const json& j, const std::string& human) {
  if (g.json) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << human;
  }
}

json cost_json(const CostReport& c) {
  return {{"luts", c.luts}, {"registers", c.registers}, {"bram_bits", c.bram_bits}, {"dsps", c.dsps},
          {"latency_cycles", c.latency_cycles}};
}

json quant_json(const QuantConfig& q) {
  json a = json::array();
  for (const LayerQuant& l : q) a.push_back(quant_label(l));
  return a;
}

json plan_json(const NetworkSpec& net, const UnrollPlan& plan) {
  json rows = json::array();
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    const LayerUnroll& u = plan.layers[i];
    rows.push_back({{"type", layer_type_label(l)},
                    {"c", l.in_channels},
                    {"c_out", l.out_channels},
                    {"u", u.unroll_in},
                    {"u_out", u.unroll_out},
                    {"c_over_u", input_phases(l, u)},
                    {"c_out_over_u_out", output_phases(l, u)},
                    {"t_in", u.t_in},
                    {"t_out", u.t_out}});
  }
  return {{"ipp", plan.ipp.text()}, {"layers", rows}};
}

json eval_json(const EvalResult& e) {
  return {{"top1", e.top1}, {"top5", e.top5}, {"samples", e.sample_count}};
}

std::string format_eval(const EvalResult& e) {
  std::ostringstream os;
  os << "samples " << e.sample_count << "\ntop1 " << e.top1 << "\ntop5 " << e.top5 << "\n";
  return os.str();
}

int run_plan(const Globals& g, const Inputs& in, RunManifest& run) {
  const NetworkSpec net = load_net(in, run);
  const UnrollPlan plan = load_plan(net, in, run);
  const std::string text = format_plan(net, plan);
  if (g.json) {
    if (!g.out.empty()) emit_text(g, run, text);
    std::cout << plan_json(net, plan).dump(2) << "\n";
  } else {
    emit_text(g, run, text);
  }
  run.set_result(plan_json(net, plan));
  return 0;
}

int run_gen_weights(const Globals& g, const Inputs& in, RunManifest& run) {
  const NetworkSpec net = load_net(in, run);
  require(g.out, "--out");
  require_fresh(g.out, g.force);
  write_file(g.out, serialize_weight_blob(net, synthesize_params(net, g.seed)));
  run.add_output(g.out);
  return 0;
}

int run_gen_dataset(const Globals& g, const Inputs& in, RunManifest& run, int samples, int noise, bool images_only) {
  const NetworkSpec net = load_net(in, run);
  require(g.out, "--out");
  require_fresh(g.out, g.force);
  SyntheticOptions opts;
  opts.samples = samples;
  opts.classes = net.class_count;
  opts.shape = net.input;
  opts.noise = noise;
  opts.seed = g.seed;
  run.set_option("samples", samples);
  run.set_option("noise", noise);
  const Dataset d = synthesize_dataset(opts);
  write_file(g.out, images_only ? serialize_images(d.images) : serialize_dataset(d));
  run.add_output(g.out);
  return 0;
}

int run_quantize(const Globals& g, const Inputs& in, RunManifest& run) {
  const NetworkSpec net = load_net(in, run);
  require(g.out, "--out");
  require_fresh(g.out, g.force);
  const QuantizedModel m = quantize_model(net, load_params(net, in, g, run), config_of(net));
  save_quantized_checkpoint(m, g.out);
  run.add_output(g.out);
  json layers = json::array();
  std::ostringstream os;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    layers.push_back({{"quant", quant_label(m.layers[i].quant)}, {"scale_exponent", m.layers[i].scale_exponent}});
    os << i << " " << quant_label(m.layers[i].quant) << " scale_exp " << m.layers[i].scale_exponent << "\n";
  }
  run.set_result({{"layers", layers}});
  print_result(g, {{"checkpoint", g.out}, {"layers", layers}}, os.str());
  return 0;
}

int run_eval(const Globals& g, const Inputs& in, RunManifest& run) {
  const QuantizedModel m = load_checkpoint(in, run);
  const EvalResult e = evaluate(m, load_data(m.net, in, run), g.jobs);
  run.set_result(eval_json(e));
  print_result(g, eval_json(e), format_eval(e));
  return 0;
}

int run_estimate(const Globals& g, const Inputs& in, RunManifest& run) {
  NetworkSpec net;
  QuantConfig q;
  if (!in.checkpoint.empty()) {
    const QuantizedModel m = load_checkpoint(in, run);
    net = m.net;
    q = m.config();
  } else {
    net = load_net(in, run);
    q = config_of(net);
  }
  const UnrollPlan plan = load_plan(net, in, run);
  const CostCoefficients coeff = coefficients(g, run);
  const HwCost cost = hwcost(net, q, plan, coeff);
  json layers = json::array();
  std::ostringstream os;
  os << "layer | type | quant | luts | registers | bram_bits | dsps | latency\n";
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const CostReport& c = cost.per_layer[i];
    json lj = cost_json(c);
    lj["type"] = layer_type_label(net.layers[i]);
    lj["quant"] = quant_label(q[i]);
    layers.push_back(lj);
    os << i << " | " << layer_type_label(net.layers[i]) << " | " << quant_label(q[i]) << " | " << c.luts << " | "
       << c.registers << " | " << c.bram_bits << " | " << c.dsps << " | " << c.latency_cycles << "\n";
  }
  const CostReport& t = cost.total;
  os << "total | | | " << t.luts << " | " << t.registers << " | " << t.bram_bits << " | " << t.dsps << " | "
     << t.latency_cycles << "\n";
  os << "key " << cost.key << "\n";
  const json j = {{"layers", layers}, {"total", cost_json(t)}, {"key", cost.key}};
  run.set_result(j);
  if (!g.out.empty()) emit_text(g, run, g.json ? j.dump(2) + "\n" : os.str());
  else print_result(g, j, os.str());
  return 0;
}

int run_search(const Globals& g, const Inputs& in, RunManifest& run, double alpha_frac, double h_budget, int epochs,
               int final_epochs, double learning_rate, int batch_size) {
  const NetworkSpec net = load_net(in, run);
  const std::vector<LayerParams> theta = load_params(net, in, g, run);
  const Dataset data = load_data(net, in, run);
  const UnrollPlan plan = load_plan(net, in, run);
  const CostCoefficients coeff = coefficients(g, run);
  require(g.out, "--out");
  require_fresh(g.out, g.force);
  if (!g.trace.empty()) require_fresh(g.trace, g.force);
  if (!(alpha_frac >= 0.0 && alpha_frac <= 1.0)) fail(ErrorKind::kInvalidArgument, "--alpha-frac must lie in [0, 1]");

  const EvalResult baseline = evaluate(quantize_model(net, theta, config_of(net)), data, g.jobs);
  SearchConfig cfg;
  cfg.alpha_budget = alpha_frac * baseline.top1;
  cfg.h_budget = h_budget;
  cfg.epochs = epochs;
  cfg.learning_rate = learning_rate;
  cfg.batch_size = batch_size;
  cfg.seed = g.seed;
  cfg.jobs = g.jobs;
  SearchResult r = search(net, theta, config_of(net), cfg, data, plan, coeff);

  if (final_epochs > 0) {
    FinetuneOptions fo;
    fo.epochs = final_epochs;
    fo.learning_rate = learning_rate;
    fo.batch_size = batch_size;
    fo.seed = step_seed(g.seed, r.trace.steps.size() + 1);
    fo.jobs = g.jobs;
    r.theta = finetune_ste(net, r.theta, r.q, data, fo).params;
  }
  const QuantizedModel m = quantize_model(net, r.theta, r.q);
  const EvalResult final_eval = evaluate(m, data, g.jobs);
  save_quantized_checkpoint(m, g.out);
  run.add_output(g.out);
  if (!g.trace.empty()) {
    write_file(g.trace, format_trace(r.trace));
    run.add_output(g.trace);
  }
  std::size_t accepted = 0;
  for (const SearchStep& s : r.trace.steps) accepted += s.accepted ? 1 : 0;
  const json j = {{"baseline", eval_json(baseline)},
                  {"alpha_budget", cfg.alpha_budget},
                  {"initial_cost", r.trace.initial_cost},
                  {"final_cost", r.cost},
                  {"accepted_steps", accepted},
                  {"early_exit", r.trace.early_exit},
                  {"quant", quant_json(r.q)},
                  {"final", eval_json(final_eval)}};
  run.set_result(j);
  std::ostringstream os;
  os << "baseline_top1 " << baseline.top1 << "\nalpha_budget " << cfg.alpha_budget << "\ninitial_cost "
     << r.trace.initial_cost << "\nfinal_cost " << r.cost << "\naccepted_steps " << accepted << "\nearly_exit "
     << (r.trace.early_exit ? "yes" : "no") << "\nfinal_top1 " << final_eval.top1 << "\nquant";
  for (const LayerQuant& l : r.q) os << " " << quant_label(l);
  os << "\n";
  print_result(g, j, os.str());
  return 0;
}

std::vector<int> parse_link_delays(const std::vector<std::string>& specs, std::size_t layers) {
  std::vector<int> delays;
  if (specs.empty()) return delays;
  delays.assign(layers - 1, 0);
  for (const std::string& s : specs) {
    const auto colon = s.find(':');
    std::size_t cut = 0;
    int cycles = 0;
    try {
      if (colon == std::string::npos) throw std::invalid_argument(s);
      cut = std::stoul(s.substr(0, colon));
      cycles = std::stoi(s.substr(colon + 1));
    } catch (const std::exception&) {
      fail(ErrorKind::kInvalidArgument, "--link expects LAYER:CYCLES, got '" + s + "'");
    }
    if (cut + 1 >= layers || cycles < 0) fail(ErrorKind::kInvalidArgument, "--link '" + s + "' is out of range");
    delays[cut] = cycles;
  }
  return delays;
}

int run_simulate(const Globals& g, const Inputs& in, RunManifest& run, bool assert_bitexact, bool timing_only,
                 int count, double mhz, const std::vector<std::string>& links, std::int64_t window_begin,
                 std::int64_t window_end) {
  const QuantizedModel m = load_checkpoint(in, run);
  const UnrollPlan plan = load_plan(m.net, in, run);
  std::vector<ActTensor> images;
  if (!in.images.empty()) {
    run.add_input(in.images);
    images = parse_images(read_file(in.images));
  } else if (!in.data.empty()) {
    images = load_data(m.net, in, run).images;
  } else {
    for (int i = 0; i < count; ++i) images.push_back(random_image(m.net.input, step_seed(g.seed, i)));
  }
  if (assert_bitexact && timing_only) fail(ErrorKind::kInvalidArgument, "--assert-bitexact needs computed values");

  SimOptions opts;
  opts.link_delays = parse_link_delays(links, m.net.layers.size());
  opts.compute_values = !timing_only;
  opts.window_begin = window_begin;
  opts.window_end = window_end;
  std::ofstream trace_file;
  if (!g.trace.empty()) {
    require_fresh(g.trace, g.force);
    trace_file.open(g.trace);
    if (!trace_file) fail(ErrorKind::kIo, "cannot open " + g.trace);
    opts.trace = &trace_file;
  }
  const SimReport r = simulate(m, plan, images, opts);
  if (trace_file.is_open()) {
    trace_file.close();
    run.add_output(g.trace);
  }
  const bool steady = window_begin > 0 || window_end >= 0;
  const UtilizationSummary util = measure_utilization(m.net, r, steady);

  std::size_t mismatches = 0;
  if (assert_bitexact) {
    const GoldenEngine golden(m);
    for (std::size_t i = 0; i < images.size(); ++i) {
      const ForwardResult f = golden.run(images[i]);
      if (f.layer_outputs.back() != r.outputs[i] || f.logits != r.logits[i]) ++mismatches;
    }
  }
  const std::int64_t per_image = r.cycles_input_consume / static_cast<std::int64_t>(images.size());
  json j = {{"images", images.size()},
            {"cycles_total", r.cycles_total},
            {"cycles_input_consume", r.cycles_input_consume},
            {"stall_count", r.stall_count},
            {"first_output_cycle", r.first_output_cycle},
            {"image_done_cycles", r.image_done_cycles},
            {"fps", frames_per_second(per_image, mhz)},
            {"clock_mhz", mhz},
            {"utilization", util.utilization},
            {"utilization_all_layers", util.utilization_all_layers},
            {"utilization_convention", util.convention}};
  if (assert_bitexact) j["bitexact_mismatches"] = mismatches;
  run.set_result(j);
  std::string text = format_sim_report(m.net, r, util, mhz);
  if (assert_bitexact) text += "bitexact " + std::string(mismatches == 0 ? "yes" : "no") + "\n";
  if (!g.out.empty()) emit_text(g, run, g.json ? j.dump(2) + "\n" : text);
  else print_result(g, j, text);
  if (mismatches != 0) {
    std::cerr << "error: simulator output differs from the golden engine on " << mismatches << " image(s)\n";
    return kMismatchExit;
  }
  return 0;
}

int run_emit(const Globals& g, const Inputs& in, RunManifest& run) {
  const QuantizedModel m = load_checkpoint(in, run);
  const UnrollPlan plan = load_plan(m.net, in, run);
  require(g.out, "--out");
  const RtlArtifact art = emit_rtl(m, plan, g.out, g.force);
  json files = json::array();
  for (const RtlFile& f : art.files) {
    run.add_output(fs::path(g.out) / f.name);
    files.push_back(f.name);
  }
  print_result(g, {{"out", g.out}, {"files", files}}, "wrote " + std::to_string(art.files.size()) + " files to " +
                                                          g.out + "\n");
  return 0;
}

int run_partition(const Globals& g, const Inputs& in, RunManifest& run, const std::string& budgets_path,
                  double link_ms, std::int64_t link_override, double mhz) {
  NetworkSpec net;
  QuantConfig q;
  if (!in.checkpoint.empty()) {
    const QuantizedModel m = load_checkpoint(in, run);
    net = m.net;
    q = m.config();
  } else {
    net = load_net(in, run);
    q = config_of(net);
  }
  const UnrollPlan plan = load_plan(net, in, run);
  const CostCoefficients coeff = coefficients(g, run);
  require(budgets_path, "--budgets");
  run.add_input(budgets_path);
  const std::vector<CostReport> budgets = parse_budgets(read_file(budgets_path));
  const std::int64_t link = link_override >= 0 ? link_override : link_cycles(link_ms, mhz);
  const HwCost cost = hwcost(net, q, plan, coeff);
  const PartitionPlan p = partition(net, plan, cost.per_layer, budgets, link);
  json devices = json::array();
  for (const DeviceSpan& d : p.devices) {
    devices.push_back({{"first_layer", d.first_layer}, {"end_layer", d.end_layer}, {"cost", cost_json(d.cost)}});
  }
  const json j = {{"devices", devices},
                  {"cuts", p.cuts},
                  {"payload_bits", p.payload_bits},
                  {"link_latency", p.link_latency},
                  {"added_latency", p.added_latency}};
  run.set_result(j);
  const std::string text = format_partition(net, p);
  if (!g.out.empty()) emit_text(g, run, g.json ? j.dump(2) + "\n" : text);
  else print_result(g, j, text);
  return 0;
}

fs::path default_manifest_path(const std::string& subcommand, const Globals& g) {
  if (!g.run_manifest.empty()) return g.run_manifest;
  if (g.out.empty()) return "flatstream-run.json";
  if (subcommand == "emit") return fs::path(g.out) / "run.json";
  return g.out + ".run.json";
}

}  // namespace

int main_impl(int argc, char** argv) {
  CLI::App app{"flatstream: streaming CNN accelerator generator", "flatstream"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice (synthesis, shuffling)")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Maximum worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("--json", g.json, "Print structured JSON on stdout instead of tables");
  app.add_option("--coeff", g.coeff, "Cost coefficient file (one 'name value' pair per line)");
  app.add_option("--out", g.out, "Output file, or directory for emit");
  app.add_flag("--force", g.force, "Replace existing outputs");
  app.add_option("--trace", g.trace, "Write the search trace or the simulator cycle trace here");
  app.add_option("--run-manifest", g.run_manifest,
                 "Run manifest path (default: <out>.run.json, <out>/run.json for emit, else ./flatstream-run.json)");

  Inputs in;
  auto add_model = [&](CLI::App* s) { s->add_option("--model", in.model, "Network descriptor (.net)"); };
  auto add_weights = [&](CLI::App* s) {
    s->add_option("--weights", in.weights, "Float32 weight blob (default: synthesized from --seed)");
  };
  auto add_checkpoint = [&](CLI::App* s) { s->add_option("--checkpoint", in.checkpoint, "Quantized checkpoint (.tmto)"); };
  auto add_plan = [&](CLI::App* s) {
    s->add_option("--ipp", in.ipp, "Input pixel rate as 1 or 1/D")->capture_default_str();
    s->add_option("--plan", in.plan, "Plan file from `plan --out` (overrides --ipp)");
  };
  auto add_data = [&](CLI::App* s) { s->add_option("--data", in.data, "Labelled dataset file"); };

  CLI::App* plan = app.add_subcommand("plan", "Throughput-matched unroll plan table");
  add_model(plan);
  add_plan(plan);

  CLI::App* quantize = app.add_subcommand("quantize", "Quantize a model with the descriptor's per-layer config");
  add_model(quantize);
  add_weights(quantize);

  double alpha_frac = 0.95;
  double h_budget = 0.0;
  int epochs = 3;
  int final_epochs = 0;
  double learning_rate = 0.05;
  int batch_size = 16;
  CLI::App* search_cmd = app.add_subcommand("search", "Greedy hybrid quantization search, then checkpoint");
  add_model(search_cmd);
  add_weights(search_cmd);
  add_data(search_cmd);
  add_plan(search_cmd);
  search_cmd->add_option("--alpha-frac", alpha_frac, "Accuracy floor as a fraction of the baseline top-1")
      ->capture_default_str();
  search_cmd->add_option("--h-budget", h_budget, "Stop once the cost key is at or below this")->capture_default_str();
  search_cmd->add_option("--epochs", epochs, "Fine-tuning epochs per search step")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  search_cmd->add_option("--final-epochs", final_epochs, "Fine-tuning epochs after the search")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  search_cmd->add_option("--learning-rate", learning_rate, "SGD step size")->capture_default_str();
  search_cmd->add_option("--batch-size", batch_size, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();

  CLI::App* estimate = app.add_subcommand("estimate", "Per-layer LUT, register, BRAM, DSP and latency estimate");
  add_model(estimate);
  add_checkpoint(estimate);
  add_plan(estimate);

  bool assert_bitexact = false;
  bool timing_only = false;
  int count = 1;
  double mhz = 156.0;
  std::vector<std::string> links;
  std::int64_t window_begin = 0;
  std::int64_t window_end = -1;
  CLI::App* simulate_cmd = app.add_subcommand("simulate", "Cycle-accurate streaming simulation");
  add_checkpoint(simulate_cmd);
  add_plan(simulate_cmd);
  simulate_cmd->add_option("--images", in.images, "Image file (default: --count random images from --seed)");
  add_data(simulate_cmd);
  simulate_cmd->add_option("--count", count, "Random images when no image file is given")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  simulate_cmd->add_flag("--assert-bitexact", assert_bitexact, "Exit 1 unless every output matches the golden engine");
  simulate_cmd->add_flag("--timing-only", timing_only, "Skip arithmetic, keep cycle behaviour");
  simulate_cmd->add_option("--mhz", mhz, "Clock for the fps conversion")->capture_default_str();
  simulate_cmd->add_option("--link", links, "Inter-device link after LAYER taking CYCLES (LAYER:CYCLES)");
  simulate_cmd->add_option("--window-begin", window_begin, "First cycle of the utilization window")
      ->capture_default_str();
  simulate_cmd->add_option("--window-end", window_end, "End cycle of the utilization window (-1: run end)")
      ->capture_default_str();

  CLI::App* emit = app.add_subcommand("emit", "Write SystemVerilog, weight hex files and a manifest");
  add_checkpoint(emit);
  add_plan(emit);

  std::string budgets;
  double link_ms = 0.0013;
  std::int64_t link_override = -1;
  CLI::App* partition_cmd = app.add_subcommand("partition", "Split the pipeline over devices");
  add_model(partition_cmd);
  add_checkpoint(partition_cmd);
  add_plan(partition_cmd);
  partition_cmd->add_option("--budgets", budgets, "One device per line: luts regs bram_bits dsps (inf allowed)");
  partition_cmd->add_option("--link-ms", link_ms, "Link latency in milliseconds")->capture_default_str();
  partition_cmd->add_option("--link-cycles", link_override, "Link latency in cycles (overrides --link-ms)");
  partition_cmd->add_option("--mhz", mhz, "Clock for the link conversion")->capture_default_str();

  CLI::App* eval = app.add_subcommand("eval", "Top-1 and top-5 of a checkpoint on a dataset");
  add_checkpoint(eval);
  add_data(eval);

  int samples = 64;
  int noise = 24;
  bool images_only = false;
  CLI::App* gen_dataset = app.add_subcommand("gen-dataset", "Synthesize a separable labelled dataset");
  add_model(gen_dataset);
  gen_dataset->add_option("--samples", samples, "Sample count")->check(CLI::PositiveNumber)->capture_default_str();
  gen_dataset->add_option("--noise", noise, "Uniform noise amplitude in activation codes")->capture_default_str();
  gen_dataset->add_flag("--images-only", images_only, "Write an unlabelled image file");

  CLI::App* gen_weights = app.add_subcommand("gen-weights", "Synthesize a float32 weight blob");
  add_model(gen_weights);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code_for(ErrorKind::kInvalidArgument);
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  RunManifest run(name, g.seed);
  run.set_option("jobs", g.jobs);
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_single_name() == "help" || opt->count() == 0) continue;
    run.set_option(opt->get_single_name(), opt->as<std::vector<std::string>>());
  }
  try {
    int rc = 0;
    if (sub == plan) rc = run_plan(g, in, run);
    else if (sub == quantize) rc = run_quantize(g, in, run);
    else if (sub == search_cmd) rc = run_search(g, in, run, alpha_frac, h_budget, epochs, final_epochs, learning_rate, batch_size);
    else if (sub == estimate) rc = run_estimate(g, in, run);
    else if (sub == simulate_cmd)
      rc = run_simulate(g, in, run, assert_bitexact, timing_only, count, mhz, links, window_begin, window_end);
    else if (sub == emit) rc = run_emit(g, in, run);
    else if (sub == partition_cmd) rc = run_partition(g, in, run, budgets, link_ms, link_override, mhz);
    else if (sub == eval) rc = run_eval(g, in, run);
    else if (sub == gen_dataset) rc = run_gen_dataset(g, in, run, samples, noise, images_only);
    else if (sub == gen_weights) rc = run_gen_weights(g, in, run);
    run.write(default_manifest_path(name, g));
    return rc;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace flatstream::cli

int main(int argc, char** argv) { return flatstream::cli::main_impl(argc, argv); }
