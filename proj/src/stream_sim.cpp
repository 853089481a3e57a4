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

#include "flatstream/stream_sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "flatstream/error.hpp"
#include "flatstream/golden_engine.hpp"

namespace flatstream {
namespace {

struct Pending {
  std::int64_t out_global = 0;
  std::vector<std::int32_t> acc;
};

struct InFlight {
  std::int64_t arrival = 0;
  int block = 0;
  std::vector<std::uint8_t> data;
};

// One delivery into a core's line buffer, applied at cycle end.
struct Delivery {
  int block = 0;
  std::vector<std::uint8_t> data;
};

class Core {
 public:
  Core(const LayerSpec& spec, const LayerUnroll& unroll, const QuantizedLayer& ql, bool compute)
      : l(spec), u(unroll), q(ql), compute(compute) {
    dp = build_datapath(spec, ql);
    nb_in = input_phases(spec, unroll);
    nb_out = output_phases(spec, unroll);
    oh = spec.out_height();
    ow = spec.out_width();
    pix_per_image = static_cast<std::int64_t>(spec.in_height) * spec.in_width;
    out_per_image = static_cast<std::int64_t>(oh) * ow;
    capacity = static_cast<std::int64_t>(spec.kernel + spec.stride) * spec.in_width + spec.kernel;
    queue_capacity = static_cast<std::size_t>(ow) + 1;
    lane_factor = spec.is_channelwise() ? 1 : spec.out_channels;
    units = static_cast<std::int64_t>(unroll.unroll_in) * spec.kernel * spec.kernel * lane_factor;
    if (compute) {
      ring.assign(static_cast<std::size_t>(capacity) * spec.in_channels, 0);
      transpose_weights();
    }
  }

  // Lane-major weights: [ky][kx][ci][co] for full convolutions, [ky][kx][c] otherwise.
  void transpose_weights() {
    if (!l.has_weights()) return;
    const int k = l.kernel, c = l.in_channels, co_n = l.out_channels;
    wt.assign(dp.multipliers.size(), 0);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        if (l.kind == LayerKind::kDepthwiseConv) {
          for (int ch = 0; ch < c; ++ch) {
            wt[(static_cast<std::size_t>(ky) * k + kx) * c + ch] =
                dp.multipliers[(static_cast<std::size_t>(ch) * k + ky) * k + kx];
          }
          continue;
        }
        for (int ci = 0; ci < c; ++ci) {
          for (int co = 0; co < co_n; ++co) {
            wt[((static_cast<std::size_t>(ky) * k + kx) * c + ci) * co_n + co] =
                dp.multipliers[((static_cast<std::size_t>(co) * c + ci) * k + ky) * k + kx];
          }
        }
      }
    }
  }

  std::int64_t oldest_needed() const {
    const std::int64_t out = busy ? cur_out : next_out;
    const std::int64_t img = out / out_per_image;
    const int oy = static_cast<int>((out % out_per_image) / ow);
    return img * pix_per_image + static_cast<std::int64_t>(std::max(0, oy * l.stride - l.padding)) * l.in_width;
  }

  bool can_accept() const { return blocks_in_pixel > 0 || pixels_complete - oldest_needed() < capacity; }

  std::int64_t trigger_pixel(std::int64_t out) const {
    const std::int64_t img = out / out_per_image;
    const int oy = static_cast<int>((out % out_per_image) / ow);
    const int ox = static_cast<int>(out % ow);
    const int rr = std::min(oy * l.stride - l.padding + l.kernel - 1, l.in_height - 1);
    const int cc = std::min(ox * l.stride - l.padding + l.kernel - 1, l.in_width - 1);
    return img * pix_per_image + static_cast<std::int64_t>(rr) * l.in_width + cc;
  }

  // Reads the window of output `out` from the line buffer and accumulates it.
  void start_output(std::int64_t out) {
    const std::int64_t img = out / out_per_image;
    const int oy = static_cast<int>((out % out_per_image) / ow);
    const int ox = static_cast<int>(out % ow);
    const int k = l.kernel, c = l.in_channels, co_n = l.out_channels;
    const int iy0 = oy * l.stride - l.padding, ix0 = ox * l.stride - l.padding;
    cur_valid = 0;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int iy = iy0 + ky, ix = ix0 + kx;
        if (iy >= 0 && iy < l.in_height && ix >= 0 && ix < l.in_width) ++cur_valid;
      }
    }
    if (!compute) return;
    cur_acc.assign(static_cast<std::size_t>(co_n), 0);
    for (int ky = 0; ky < k; ++ky) {
      const int iy = iy0 + ky;
      if (iy < 0 || iy >= l.in_height) continue;
      for (int kx = 0; kx < k; ++kx) {
        const int ix = ix0 + kx;
        if (ix < 0 || ix >= l.in_width) continue;
        const std::int64_t g = img * pix_per_image + static_cast<std::int64_t>(iy) * l.in_width + ix;
        if (g >= pixels_complete || g < pixels_complete - capacity) {
          throw std::logic_error("line buffer does not hold a pixel of the active window");
        }
        const std::uint8_t* px = &ring[static_cast<std::size_t>(g % capacity) * c];
        const std::size_t tap = static_cast<std::size_t>(ky) * k + kx;
        if (l.kind == LayerKind::kAvgPool) {
          for (int ch = 0; ch < c; ++ch) cur_acc[ch] += px[ch];
        } else if (l.kind == LayerKind::kDepthwiseConv) {
          const std::int32_t* w = &wt[tap * c];
          for (int ch = 0; ch < c; ++ch) cur_acc[ch] += px[ch] * w[ch];
        } else {
          for (int ci = 0; ci < c; ++ci) {
            const std::int32_t a = px[ci];
            if (a == 0) continue;
            const std::int32_t* w = &wt[(tap * c + ci) * co_n];
            for (int co = 0; co < co_n; ++co) cur_acc[co] += a * w[co];
          }
        }
      }
    }
  }

  // Lane accounting for input block `b` of the active output.
  void account_busy(UnitCycles& s, int b) const {
    const int k2 = l.kernel * l.kernel;
    const int ch = std::min(u.unroll_in, l.in_channels - b * u.unroll_in);
    s.active += static_cast<std::int64_t>(cur_valid) * ch * lane_factor;
    s.padding_idle += static_cast<std::int64_t>(k2 - cur_valid) * ch * lane_factor;
    s.partial_idle += static_cast<std::int64_t>(u.unroll_in - ch) * k2 * lane_factor;
    ++s.busy_cycles;
  }

  void write_block(const Delivery& d) {
    if (compute) {
      const std::size_t base = static_cast<std::size_t>(pixels_complete % capacity) * l.in_channels +
                               static_cast<std::size_t>(d.block) * u.unroll_in;
      std::copy(d.data.begin(), d.data.end(), ring.begin() + static_cast<std::ptrdiff_t>(base));
    }
    if (++blocks_in_pixel == nb_in) {
      blocks_in_pixel = 0;
      ++pixels_complete;
    }
  }

  const LayerSpec& l;
  LayerUnroll u;
  const QuantizedLayer& q;
  bool compute;
  LayerDatapath dp;
  std::vector<std::int32_t> wt;
  int nb_in = 1, nb_out = 1, oh = 1, ow = 1, lane_factor = 1;
  std::int64_t pix_per_image = 1, out_per_image = 1, capacity = 1, units = 1;
  std::size_t queue_capacity = 1;

  std::vector<std::uint8_t> ring;
  std::int64_t pixels_complete = 0;
  int blocks_in_pixel = 0;

  bool busy = false;
  int phase = 0;
  std::int64_t cur_out = 0;
  std::int64_t next_out = 0;
  int cur_valid = 0;
  std::vector<std::int32_t> cur_acc;

  std::deque<Pending> queue;
  int emit_phase = 0;

  int in_delay = 0;
  std::deque<InFlight> pipe;
};

}  // namespace

SimReport simulate(const QuantizedModel& model, const UnrollPlan& plan, const std::vector<ActTensor>& images,
                   const SimOptions& opts) {
  model.validate();
  const NetworkSpec& net = model.net;
  check_plan(net, plan);
  if (net.layers.empty()) fail(ErrorKind::kPlanMismatch, "network has no layers");
  for (const ActTensor& img : images) {
    if (!(img.shape == net.input)) fail(ErrorKind::kShapeMismatch, "image shape disagrees with network input");
  }
  const std::size_t n_layers = net.layers.size();
  if (!opts.link_delays.empty() && opts.link_delays.size() + 1 != n_layers) {
    fail(ErrorKind::kInvalidArgument, "one link delay per layer boundary required");
  }
  for (std::size_t i = 0; i + 1 < n_layers; ++i) {
    if (plan.layers[i].unroll_out != plan.layers[i + 1].unroll_in) {
      fail(ErrorKind::kPlanMismatch, "block width changes across boundary " + std::to_string(i));
    }
  }

  std::vector<Core> cores;
  cores.reserve(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    cores.emplace_back(net.layers[i], plan.layers[i], model.layers[i], opts.compute_values);
    if (i > 0 && !opts.link_delays.empty()) cores[i].in_delay = opts.link_delays[i - 1];
  }

  SimReport r;
  r.layers.resize(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) r.layers[i].units = cores[i].units;
  r.window_begin = opts.window_begin;
  r.logit_point = cores.back().dp.out_point;
  const auto n_images = static_cast<std::int64_t>(images.size());
  const Shape3 out_shape = net.output_shape();
  if (opts.compute_values) {
    r.outputs.assign(images.size(), ActTensor(out_shape));
    r.logits.assign(images.size(), std::vector<std::int64_t>(out_shape.size(), 0));
    if (opts.capture_layers) {
      r.layer_outputs.resize(images.size());
      for (auto& per_image : r.layer_outputs) {
        for (const LayerSpec& l : net.layers) per_image.emplace_back(Shape3{l.out_height(), l.out_width(), l.out_channels});
      }
    }
  }
  r.image_done_cycles.assign(images.size(), -1);
  if (images.empty()) return r;

  const int d = plan.ipp.denominator;
  const Core& first = cores.front();
  const std::int64_t total_src_pixels = n_images * first.pix_per_image;
  std::int64_t src_pixel = 0;
  int src_block = 0;
  std::int64_t slot_start = 0, last_slot_start = 0;

  const Core& last = cores.back();
  const std::int64_t expected_sink_blocks = n_images * last.out_per_image * last.nb_out;
  std::int64_t sink_blocks = 0;

  int max_delay = 0;
  for (int v : opts.link_delays) max_delay = std::max(max_delay, v);
  const std::int64_t deadlock_after = static_cast<std::int64_t>(d) + max_delay + 2;
  std::int64_t last_event = 0;

  if (opts.trace) *opts.trace << "cycle,layer,phase,active_units\n";

  std::vector<char> accept(n_layers, 0);
  std::vector<std::vector<Delivery>> deliveries(n_layers);
  std::vector<char> pipe_pop(n_layers, 0);
  std::vector<char> emit_now(n_layers, 0);
  std::vector<char> compute_now(n_layers, 0);
  std::vector<char> start_now(n_layers, 0);
  const auto total_outputs = [&](const Core& c) { return n_images * c.out_per_image; };

  for (std::int64_t t = 0;; ++t) {
    bool event = false;
    const bool in_window = t >= opts.window_begin && (opts.window_end < 0 || t < opts.window_end);

    // Phase one: decisions on start-of-cycle state.
    for (std::size_t i = 0; i < n_layers; ++i) {
      accept[i] = cores[i].can_accept();
      deliveries[i].clear();
      pipe_pop[i] = emit_now[i] = compute_now[i] = start_now[i] = 0;
    }

    bool src_sent = false;
    if (src_pixel < total_src_pixels && t >= slot_start) {
      if (accept[0]) {
        src_sent = true;
        const ActTensor& img = images[static_cast<std::size_t>(src_pixel / first.pix_per_image)];
        const std::int64_t p = src_pixel % first.pix_per_image;
        const int c = first.l.in_channels, u0 = first.u.unroll_in;
        const int lo = src_block * u0, hi = std::min(c, lo + u0);
        Delivery dv;
        dv.block = src_block;
        if (opts.compute_values) {
          const auto base = static_cast<std::size_t>(p) * c;
          dv.data.assign(img.codes.begin() + static_cast<std::ptrdiff_t>(base + lo),
                         img.codes.begin() + static_cast<std::ptrdiff_t>(base + hi));
        }
        deliveries[0].push_back(std::move(dv));
      } else {
        ++r.stall_count;
      }
    }

    for (std::size_t i = 0; i < n_layers; ++i) {
      Core& c = cores[i];
      if (c.in_delay > 0 && !c.pipe.empty() && c.pipe.front().arrival <= t && accept[i]) {
        pipe_pop[i] = 1;
        deliveries[i].push_back(Delivery{c.pipe.front().block, c.pipe.front().data});
      }
    }

    std::vector<std::pair<std::size_t, InFlight>> pipe_push;
    for (std::size_t i = 0; i < n_layers; ++i) {
      Core& c = cores[i];
      if (c.queue.empty()) continue;
      const bool is_last = i + 1 == n_layers;
      const bool delayed = !is_last && cores[i + 1].in_delay > 0;
      if (!is_last && !delayed && !accept[i + 1]) {
        ++r.stall_count;
        ++r.layers[i].blocked_emits;
        continue;
      }
      emit_now[i] = 1;
      const Pending& head = c.queue.front();
      const int lo = c.emit_phase * c.u.unroll_out;
      const int hi = std::min(c.l.out_channels, lo + c.u.unroll_out);
      std::vector<std::uint8_t> codes;
      if (opts.compute_values) {
        const std::int64_t img = head.out_global / c.out_per_image;
        const std::int64_t pix = head.out_global % c.out_per_image;
        for (int ch = lo; ch < hi; ++ch) {
          const std::int64_t y = finish_channel(c.l, c.dp, c.q, ch, head.acc[static_cast<std::size_t>(ch)]);
          const std::uint8_t code = quantize_activation(y, c.dp.out_point);
          codes.push_back(code);
          const std::size_t idx = static_cast<std::size_t>(pix) * c.l.out_channels + ch;
          if (is_last) {
            r.outputs[static_cast<std::size_t>(img)].codes[idx] = code;
            r.logits[static_cast<std::size_t>(img)][idx] = y;
          }
          if (opts.capture_layers) r.layer_outputs[static_cast<std::size_t>(img)][i].codes[idx] = code;
        }
      }
      if (is_last) {
        ++sink_blocks;
        if (r.first_output_cycle < 0) r.first_output_cycle = t;
        if (c.emit_phase + 1 == c.nb_out) {
          r.image_done_cycles[static_cast<std::size_t>(head.out_global / c.out_per_image)] = t;
        }
      } else if (delayed) {
        pipe_push.emplace_back(i + 1, InFlight{t + cores[i + 1].in_delay, c.emit_phase, std::move(codes)});
      } else {
        deliveries[i + 1].push_back(Delivery{c.emit_phase, std::move(codes)});
      }
    }

    for (std::size_t i = 0; i < n_layers; ++i) {
      Core& c = cores[i];
      if (c.busy) {
        compute_now[i] = 1;
      } else if (c.next_out < total_outputs(c) && c.pixels_complete > c.trigger_pixel(c.next_out) &&
                 c.queue.size() < c.queue_capacity) {
        start_now[i] = 1;
        compute_now[i] = 1;
        c.start_output(c.next_out);  // reads only complete pixels; writes land at cycle end
      }
    }

    // Phase two: commit.
    for (std::size_t i = 0; i < n_layers; ++i) {
      Core& c = cores[i];
      LayerSimStats& st = r.layers[i];
      if (compute_now[i]) {
        event = true;
        if (start_now[i]) {
          c.busy = true;
          c.phase = 0;
          c.cur_out = c.next_out++;
        }
        c.account_busy(st.run, c.phase);
        if (in_window) c.account_busy(st.window, c.phase);
        if (opts.trace) {
          const int ch = std::min(c.u.unroll_in, c.l.in_channels - c.phase * c.u.unroll_in);
          *opts.trace << t << "," << i << "," << c.phase << ","
                      << static_cast<std::int64_t>(c.cur_valid) * ch * c.lane_factor << "\n";
        }
        if (++c.phase == c.nb_in) {
          c.busy = false;
          c.queue.push_back(Pending{c.cur_out, std::move(c.cur_acc)});
          c.cur_acc.clear();
        }
      } else {
        st.run.wait_idle += c.units;
        if (in_window) st.window.wait_idle += c.units;
      }
      if (emit_now[i]) {
        event = true;
        if (++c.emit_phase == c.nb_out) {
          c.emit_phase = 0;
          c.queue.pop_front();
        }
      }
      if (pipe_pop[i]) c.pipe.pop_front();
      for (const Delivery& dv : deliveries[i]) {
        event = true;
        c.write_block(dv);
      }
    }
    for (auto& [dst, flight] : pipe_push) cores[dst].pipe.push_back(std::move(flight));

    if (src_sent) {
      if (src_block == 0) last_slot_start = t;
      if (++src_block == first.nb_in) {
        src_block = 0;
        ++src_pixel;
        // Next slot: one pixel period after this slot, never before the pixel completed.
        slot_start = std::max(last_slot_start + d, t + 1);
      }
    }

    if (event) last_event = t;
    const auto drained = [&] {
      if (src_pixel < total_src_pixels) return false;
      return std::all_of(cores.begin(), cores.end(), [&](const Core& c) {
        return !c.busy && c.queue.empty() && c.pipe.empty() && c.next_out == total_outputs(c);
      });
    };
    // Trailing pixels no window reads still stream through every core.
    if (sink_blocks == expected_sink_blocks && drained()) {
      r.cycles_total = t + 1;
      break;
    }
    if (t - last_event > deadlock_after) {
      fail(ErrorKind::kDeadlockDetected, "no pipeline progress since cycle " + std::to_string(last_event) +
                                             " (" + std::to_string(sink_blocks) + " of " +
                                             std::to_string(expected_sink_blocks) + " output blocks emitted)");
    }
  }
  r.cycles_input_consume = last_slot_start + d;
  r.window_end = opts.window_end < 0 ? r.cycles_total : std::min(opts.window_end, r.cycles_total);
  return r;
}

UtilizationSummary measure_utilization(const NetworkSpec& net, const SimReport& report, bool steady_state) {
  UtilizationSummary s;
  s.cycles = steady_state ? report.window_end - report.window_begin : report.cycles_total;
  s.convention = "active lanes / (lanes x cycles); lanes are shift- or multiply-accumulate units of Conv, Conv dw "
                 "and Conv pw cores; window " +
                 (steady_state ? "[" + std::to_string(report.window_begin) + ", " + std::to_string(report.window_end) + ")"
                               : std::string("whole run"));
  std::int64_t conv_active = 0, all_active = 0;
  for (std::size_t i = 0; i < report.layers.size() && i < net.layers.size(); ++i) {
    const LayerSimStats& st = report.layers[i];
    const UnitCycles& uc = steady_state ? st.window : st.run;
    const LayerSpec& l = net.layers[i];
    LayerUtilization lu;
    lu.layer = i;
    lu.type = layer_type_label(l);
    lu.units = st.units;
    const double denom = static_cast<double>(st.units) * static_cast<double>(s.cycles);
    if (denom > 0) {
      lu.utilization = static_cast<double>(uc.active) / denom;
      lu.padding_idle = static_cast<double>(uc.padding_idle) / denom;
      lu.partial_idle = static_cast<double>(uc.partial_idle) / denom;
      lu.wait_idle = static_cast<double>(uc.wait_idle) / denom;
    }
    s.per_layer.push_back(lu);
    const bool conv_lane = l.kind == LayerKind::kConv || l.kind == LayerKind::kDepthwiseConv ||
                           l.kind == LayerKind::kPointwiseConv;
    all_active += uc.active;
    s.all_units += st.units;
    if (conv_lane) {
      conv_active += uc.active;
      s.conv_units += st.units;
    }
  }
  if (s.cycles > 0) {
    if (s.conv_units > 0) s.utilization = static_cast<double>(conv_active) / (static_cast<double>(s.conv_units) * s.cycles);
    if (s.all_units > 0) {
      s.utilization_all_layers = static_cast<double>(all_active) / (static_cast<double>(s.all_units) * s.cycles);
    }
  }
  return s;
}

double frames_per_second(std::int64_t cycles_per_image, double clock_mhz) {
  return clock_mhz * 1e6 / static_cast<double>(cycles_per_image);
}

std::string format_sim_report(const NetworkSpec& net, const SimReport& r, const UtilizationSummary& util,
                              double clock_mhz) {
  std::ostringstream os;
  os << "images " << r.outputs.size() << "\n";
  os << "cycles_total " << r.cycles_total << "\n";
  os << "cycles_input_consume " << r.cycles_input_consume << "\n";
  os << "pipeline_fill " << (r.cycles_total - r.cycles_input_consume) << "\n";
  os << "first_output_cycle " << r.first_output_cycle << "\n";
  os << "stall_count " << r.stall_count << "\n";
  const auto n_images = static_cast<std::int64_t>(std::max<std::size_t>(1, r.image_done_cycles.size()));
  const std::int64_t per_image = std::max<std::int64_t>(1, r.cycles_input_consume / n_images);
  (void)net;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "throughput_fps " << frames_per_second(per_image, clock_mhz) << " at " << clock_mhz << " MHz\n";
  os.precision(4);
  os << "utilization " << util.utilization << "\n";
  os << "utilization_all_layers " << util.utilization_all_layers << "\n";
  os << "convention " << util.convention << "\n";
  os << "layer type units utilization padding_idle partial_idle wait_idle\n";
  for (const LayerUtilization& lu : util.per_layer) {
    os << lu.layer << " \"" << lu.type << "\" " << lu.units << " " << lu.utilization << " " << lu.padding_idle << " "
       << lu.partial_idle << " " << lu.wait_idle << "\n";
  }
  return os.str();
}

}  // namespace flatstream
