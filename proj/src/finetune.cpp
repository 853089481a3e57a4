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

#include "flatstream/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "flatstream/error.hpp"
#include "flatstream/quantized_model.hpp"

namespace flatstream {
namespace {

constexpr double kActMax = kActivationCodeMax / 32.0;

// Weights and affine the forward pass actually uses, fixed for one step.
struct EffectiveLayer {
  std::vector<double> weights;
  std::vector<double> scale;
  std::vector<double> offset;
};

std::vector<EffectiveLayer> effective_layers(const NetworkSpec& net, const std::vector<LayerParams>& theta,
                                             const QuantConfig& q, bool identity) {
  std::vector<EffectiveLayer> out(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (!l.has_weights()) continue;
    EffectiveLayer& e = out[i];
    const auto& w = theta[i].weights.data;
    if (identity) {
      e.weights = w;
    } else {
      const WeightFormat fmt = choose_format(w, q[i].arith == Arith::kShift, q[i].bits);
      e.weights.resize(w.size());
      for (std::size_t j = 0; j < w.size(); ++j) e.weights[j] = decode_weight(quantize_weight(w[j], fmt), fmt);
    }
    if (l.has_bn) {
      const std::size_t c = static_cast<std::size_t>(l.out_channels);
      e.scale.resize(c);
      e.offset.resize(c);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const auto& p = theta[i];
        if (!(p.sigma[ch] > 0.0)) fail(ErrorKind::kNonPositiveSigma, "BN sigma must be positive");
        if (identity) {
          e.scale[ch] = p.gamma[ch] / p.sigma[ch];
          e.offset[ch] = p.beta[ch] - p.gamma[ch] * p.mean[ch] / p.sigma[ch];
        } else {
          const FusedAffine a = fuse_bn(p.gamma[ch], p.beta[ch], p.mean[ch], p.sigma[ch]);
          e.scale[ch] = a.scale_value();
          e.offset[ch] = a.offset_value();
        }
      }
    }
  }
  return out;
}

double round_half_away(double v) { return v < 0 ? -std::floor(-v + 0.5) : std::floor(v + 0.5); }

// Per-layer tensors kept for the backward pass.
struct Trace {
  std::vector<std::vector<double>> inputs;  // layer inputs, HWC
  std::vector<std::vector<double>> pre;     // values before requantization
};

// Linear part of a layer: z = W * x (or the window mean for pooling).
std::vector<double> linear_forward(const LayerSpec& l, const std::vector<double>& w, const std::vector<double>& x) {
  const int oh = l.out_height(), ow = l.out_width(), k = l.kernel;
  const int c_in = l.in_channels, c_out = l.out_channels;
  std::vector<double> z(static_cast<std::size_t>(oh) * ow * c_out, 0.0);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int co = 0; co < c_out; ++co) {
        double acc = 0.0;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * l.stride - l.padding + ky;
          if (iy < 0 || iy >= l.in_height) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * l.stride - l.padding + kx;
            if (ix < 0 || ix >= l.in_width) continue;
            const std::size_t base = (static_cast<std::size_t>(iy) * l.in_width + ix) * c_in;
            if (l.kind == LayerKind::kAvgPool) {
              acc += x[base + co];
            } else if (l.kind == LayerKind::kDepthwiseConv) {
              acc += w[(static_cast<std::size_t>(co) * k + ky) * k + kx] * x[base + co];
            } else {
              for (int ci = 0; ci < c_in; ++ci) {
                acc += w[((static_cast<std::size_t>(co) * c_in + ci) * k + ky) * k + kx] * x[base + ci];
              }
            }
          }
        }
        if (l.kind == LayerKind::kAvgPool) acc /= static_cast<double>(k) * k;
        z[(static_cast<std::size_t>(oy) * ow + ox) * c_out + co] = acc;
      }
    }
  }
  return z;
}

// Accumulates dW and returns dx for dz.
std::vector<double> linear_backward(const LayerSpec& l, const std::vector<double>& w, const std::vector<double>& x,
                                    const std::vector<double>& dz, std::vector<double>* dw) {
  const int oh = l.out_height(), ow = l.out_width(), k = l.kernel;
  const int c_in = l.in_channels, c_out = l.out_channels;
  std::vector<double> dx(x.size(), 0.0);
  const double pool_norm = 1.0 / (static_cast<double>(k) * k);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int co = 0; co < c_out; ++co) {
        const double g = dz[(static_cast<std::size_t>(oy) * ow + ox) * c_out + co];
        if (g == 0.0) continue;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * l.stride - l.padding + ky;
          if (iy < 0 || iy >= l.in_height) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * l.stride - l.padding + kx;
            if (ix < 0 || ix >= l.in_width) continue;
            const std::size_t base = (static_cast<std::size_t>(iy) * l.in_width + ix) * c_in;
            if (l.kind == LayerKind::kAvgPool) {
              dx[base + co] += g * pool_norm;
            } else if (l.kind == LayerKind::kDepthwiseConv) {
              const std::size_t widx = (static_cast<std::size_t>(co) * k + ky) * k + kx;
              (*dw)[widx] += g * x[base + co];
              dx[base + co] += g * w[widx];
            } else {
              for (int ci = 0; ci < c_in; ++ci) {
                const std::size_t widx = ((static_cast<std::size_t>(co) * c_in + ci) * k + ky) * k + kx;
                (*dw)[widx] += g * x[base + ci];
                dx[base + ci] += g * w[widx];
              }
            }
          }
        }
      }
    }
  }
  return dx;
}

std::vector<double> forward(const NetworkSpec& net, const std::vector<EffectiveLayer>& eff, const ActTensor& image,
                            bool identity, Trace* trace) {
  std::vector<double> x(image.codes.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = decode_activation(image.codes[i]);
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const LayerSpec& l = net.layers[li];
    std::vector<double> y = linear_forward(l, eff[li].weights, x);
    if (l.has_bn) {
      const std::size_t c = static_cast<std::size_t>(l.out_channels);
      for (std::size_t j = 0; j < y.size(); ++j) y[j] = eff[li].scale[j % c] * y[j] + eff[li].offset[j % c];
    }
    if (trace) trace->inputs.push_back(std::move(x));
    if (li + 1 == net.layers.size()) {
      if (trace) trace->pre.push_back(y);
      return y;
    }
    x.resize(y.size());
    for (std::size_t j = 0; j < y.size(); ++j) {
      const double v = identity ? y[j] : round_half_away(y[j] * 32.0) / 32.0;
      x[j] = std::clamp(v, 0.0, kActMax);
    }
    if (trace) trace->pre.push_back(std::move(y));
  }
  return x;
}

}  // namespace

LossGradient loss_and_gradient(const NetworkSpec& net, const std::vector<LayerParams>& theta, const QuantConfig& q,
                               const Dataset& data, std::span<const std::size_t> batch, bool identity_quantizers) {
  if (batch.empty()) fail(ErrorKind::kEmptyDataset, "gradient batch is empty");
  const auto eff = effective_layers(net, theta, q, identity_quantizers);
  LossGradient out;
  out.weight_grads.resize(net.layers.size());
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    out.weight_grads[li].assign(net.layers[li].weight_count(), 0.0);
  }
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  for (std::size_t idx : batch) {
    Trace trace;
    const std::vector<double> logits = forward(net, eff, data.images[idx], identity_quantizers, &trace);
    const std::size_t label = data.labels[idx];
    const double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double v : logits) denom += std::exp(v - mx);
    out.loss += (std::log(denom) + mx - logits[label]) * inv_batch;

    std::vector<double> dy(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) {
      dy[j] = (std::exp(logits[j] - mx) / denom - (j == label ? 1.0 : 0.0)) * inv_batch;
    }
    for (std::size_t li = net.layers.size(); li-- > 0;) {
      const LayerSpec& l = net.layers[li];
      if (li + 1 != net.layers.size()) {
        // Straight-through: the requantizer passes gradient inside its range.
        const auto& pre = trace.pre[li];
        for (std::size_t j = 0; j < dy.size(); ++j) {
          if (!(pre[j] > 0.0 && pre[j] < kActMax)) dy[j] = 0.0;
        }
      }
      if (l.has_bn) {
        const std::size_t c = static_cast<std::size_t>(l.out_channels);
        for (std::size_t j = 0; j < dy.size(); ++j) dy[j] *= eff[li].scale[j % c];
      }
      dy = linear_backward(l, eff[li].weights, trace.inputs[li], dy, &out.weight_grads[li]);
    }
  }
  return out;
}

FinetuneResult finetune_ste(const NetworkSpec& net, const std::vector<LayerParams>& theta, const QuantConfig& q,
                            const Dataset& data, const FinetuneOptions& opts) {
  if (opts.epochs < 0) fail(ErrorKind::kInvalidArgument, "epochs must be nonnegative");
  if (data.empty()) fail(ErrorKind::kEmptyDataset, "fine-tuning dataset has no samples");
  if (opts.batch_size < 1) fail(ErrorKind::kInvalidArgument, "batch size must be positive");
  FinetuneResult r;
  r.params = theta;
  std::mt19937_64 rng(opts.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(opts.batch_size);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const LossGradient g = loss_and_gradient(net, r.params, q, data,
                                               std::span<const std::size_t>(order).subspan(start, end - start),
                                               opts.identity_quantizers);
      if (!std::isfinite(g.loss)) fail(ErrorKind::kNonFiniteLoss, "fine-tuning loss is not finite");
      r.last_loss = g.loss;
      for (std::size_t li = 0; li < net.layers.size(); ++li) {
        auto& w = r.params[li].weights.data;
        for (std::size_t j = 0; j < w.size(); ++j) w[j] -= opts.learning_rate * g.weight_grads[li][j];
      }
      for (const auto& layer : r.params) {
        for (double v : layer.weights.data) {
          if (!std::isfinite(v)) fail(ErrorKind::kNonFiniteLoss, "fine-tuning produced a non-finite weight");
        }
      }
    }
  }
  r.alpha = evaluate(quantize_model(net, r.params, q), data, opts.jobs);
  return r;
}

}  // namespace flatstream
