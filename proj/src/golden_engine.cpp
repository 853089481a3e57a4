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

#include "flatstream/golden_engine.hpp"

#include <algorithm>
#include <thread>

#include "flatstream/error.hpp"

namespace flatstream {

LayerDatapath build_datapath(const LayerSpec& layer, const QuantizedLayer& ql) {
  LayerDatapath dp;
  if (!layer.has_weights()) {
    dp.acc_point = kActivationFracBits;
    dp.out_point = kActivationFracBits;
    dp.max_abs_multiplier = 1;
    return dp;
  }
  const std::size_t count = ql.codes.size();
  dp.multipliers.resize(count);
  if (ql.quant.arith == Arith::kShift) {
    const ShiftLayerParams params{ql.quant.bits, ql.scale_exponent};
    dp.shift_terms.resize(count);
    int e_lo = params.exponent_max();
    bool any = false;
    for (std::size_t i = 0; i < count; ++i) {
      dp.shift_terms[i] = unpack_shift(ql.codes[i], params);
      if (!dp.shift_terms[i].zero) {
        e_lo = std::min(e_lo, dp.shift_terms[i].exponent);
        any = true;
      }
    }
    if (!any) e_lo = 0;
    dp.exponent_floor = e_lo;
    dp.acc_point = kActivationFracBits + params.bias - e_lo;
    for (std::size_t i = 0; i < count; ++i) {
      const ShiftTerm& t = dp.shift_terms[i];
      if (t.zero) continue;
      const int s = t.exponent - e_lo;
      if (s > 30) {
        fail(ErrorKind::kAccumulatorOverflowRisk, "shift weight range exceeds the 32-bit accumulator");
      }
      const std::int32_t mag = std::int32_t{1} << s;
      dp.multipliers[i] = t.negative ? -mag : mag;
    }
  } else {
    dp.acc_point = kActivationFracBits + ql.scale_exponent;
    for (std::size_t i = 0; i < count; ++i) dp.multipliers[i] = mantissa_of(ql.codes[i], ql.quant.bits);
  }
  for (std::int32_t m : dp.multipliers) {
    dp.max_abs_multiplier = std::max<std::int64_t>(dp.max_abs_multiplier, m < 0 ? -std::int64_t{m} : m);
  }
  const std::int64_t bound = layer.fan_in() * kActivationCodeMax * dp.max_abs_multiplier;
  if (bound >= (std::int64_t{1} << 31)) {
    fail(ErrorKind::kAccumulatorOverflowRisk,
         "accumulator bound " + std::to_string(bound) + " reaches 2^31 (fan-in " + std::to_string(layer.fan_in()) +
             ", max multiplier " + std::to_string(dp.max_abs_multiplier) + ")");
  }
  dp.out_point = layer.has_bn ? std::max(dp.acc_point + kAffineFracBits, kAffineFracBits) : dp.acc_point;
  return dp;
}

std::int64_t round_div(std::int64_t num, std::int64_t den) {
  if (num >= 0) return (2 * num + den) / (2 * den);
  return -((-2 * num + den) / (2 * den));
}

std::int64_t finish_channel(const LayerSpec& layer, const LayerDatapath& dp, const QuantizedLayer& ql,
                            int channel, std::int32_t acc) {
  if (layer.kind == LayerKind::kAvgPool) {
    return round_div(acc, static_cast<std::int64_t>(layer.kernel) * layer.kernel);
  }
  if (!layer.has_bn) return acc;
  const FusedAffine& a = ql.bn[static_cast<std::size_t>(channel)];
  // G - F - 8 >= 0 and G - 8 >= 0 by construction of G.
  const int acc_shift = dp.out_point - dp.acc_point - kAffineFracBits;
  const int offset_shift = dp.out_point - kAffineFracBits;
  return (static_cast<std::int64_t>(acc) * a.scale << acc_shift) + (static_cast<std::int64_t>(a.offset) << offset_shift);
}

GoldenEngine::GoldenEngine(QuantizedModel model) : model_(std::move(model)) {
  model_.validate();
  for (std::size_t i = 0; i < model_.layers.size(); ++i) {
    datapaths_.push_back(build_datapath(model_.net.layers[i], model_.layers[i]));
  }
}

ActTensor GoldenEngine::run_layer(std::size_t index, const ActTensor& in,
                                  std::vector<std::int64_t>* pre_requant) const {
  const LayerSpec& l = model_.net.layers[index];
  const QuantizedLayer& ql = model_.layers[index];
  const LayerDatapath& dp = datapaths_[index];
  const bool shift = ql.quant.arith == Arith::kShift;
  const int oh = l.out_height(), ow = l.out_width();
  const int k = l.kernel, c_in = l.in_channels, c_out = l.out_channels;
  ActTensor out(Shape3{oh, ow, c_out});
  if (pre_requant) pre_requant->assign(out.codes.size(), 0);

  // One product term; shift layers shift the activation, fixed layers multiply.
  auto term = [&](std::size_t widx, std::int32_t a) -> std::int32_t {
    if (!shift) return a * dp.multipliers[widx];
    const ShiftTerm& t = dp.shift_terms[widx];
    if (t.zero) return 0;
    const std::int32_t mag = a << (t.exponent - dp.exponent_floor);
    return t.negative ? -mag : mag;
  };

  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int co = 0; co < c_out; ++co) {
        std::int32_t acc = 0;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * l.stride - l.padding + ky;
          if (iy < 0 || iy >= l.in_height) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * l.stride - l.padding + kx;
            if (ix < 0 || ix >= l.in_width) continue;
            if (l.is_channelwise()) {
              const std::int32_t a = in.at(iy, ix, co);
              if (l.kind == LayerKind::kAvgPool) {
                acc += a;
              } else {
                acc += term((static_cast<std::size_t>(co) * k + ky) * k + kx, a);
              }
              continue;
            }
            for (int ci = 0; ci < c_in; ++ci) {
              const std::size_t widx = ((static_cast<std::size_t>(co) * c_in + ci) * k + ky) * k + kx;
              acc += term(widx, in.at(iy, ix, ci));
            }
          }
        }
        const std::int64_t y = finish_channel(l, dp, ql, co, acc);
        const std::size_t oidx = out.index(oy, ox, co);
        if (pre_requant) (*pre_requant)[oidx] = y;
        out.codes[oidx] = quantize_activation(y, dp.out_point);
      }
    }
  }
  return out;
}

ForwardResult GoldenEngine::run(const ActTensor& image) const {
  if (!(image.shape == model_.net.input)) fail(ErrorKind::kShapeMismatch, "image shape disagrees with network input");
  ForwardResult r;
  const ActTensor* cur = &image;
  for (std::size_t i = 0; i < model_.layers.size(); ++i) {
    const bool last = i + 1 == model_.layers.size();
    r.layer_outputs.push_back(run_layer(i, *cur, last ? &r.logits : nullptr));
    cur = &r.layer_outputs.back();
  }
  if (!datapaths_.empty()) r.logit_point = datapaths_.back().out_point;
  return r;
}

std::vector<std::int64_t> GoldenEngine::logits(const ActTensor& image) const {
  if (!(image.shape == model_.net.input)) fail(ErrorKind::kShapeMismatch, "image shape disagrees with network input");
  ActTensor cur = image;
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < model_.layers.size(); ++i) {
    const bool last = i + 1 == model_.layers.size();
    cur = run_layer(i, cur, last ? &out : nullptr);
  }
  return out;
}

ForwardResult forward_quant(const QuantizedModel& model, const ActTensor& image) {
  return GoldenEngine(model).run(image);
}

std::size_t label_rank(const std::vector<std::int64_t>& logits, std::size_t label) {
  std::size_t rank = 0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (logits[j] > logits[label] || (logits[j] == logits[label] && j < label)) ++rank;
  }
  return rank;
}

EvalResult evaluate(const QuantizedModel& model, const Dataset& data, int jobs) {
  if (data.empty()) fail(ErrorKind::kEmptyDataset, "evaluation dataset has no samples");
  if (static_cast<std::size_t>(model.net.class_count) != model.net.output_shape().size()) {
    fail(ErrorKind::kInconsistentInputs, "class count disagrees with network output size");
  }
  if (data.class_count != model.net.class_count) {
    fail(ErrorKind::kInconsistentInputs, "dataset class count disagrees with network");
  }
  if (!(data.shape == model.net.input)) fail(ErrorKind::kShapeMismatch, "dataset image shape disagrees with network input");
  const GoldenEngine engine(model);
  std::vector<std::size_t> ranks(data.size());
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, data.size());
  auto work = [&](std::size_t w) {
    for (std::size_t i = w; i < data.size(); i += workers) {
      ranks[i] = label_rank(engine.logits(data.images[i]), data.labels[i]);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  EvalResult r;
  r.sample_count = data.size();
  std::size_t top1 = 0, top5 = 0;
  for (std::size_t rank : ranks) {
    top1 += rank < 1;
    top5 += rank < 5;
  }
  r.top1 = static_cast<double>(top1) / static_cast<double>(data.size());
  r.top5 = static_cast<double>(top5) / static_cast<double>(data.size());
  return r;
}

}  // namespace flatstream
