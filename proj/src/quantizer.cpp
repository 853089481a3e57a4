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

#include "flatstream/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flatstream/error.hpp"

namespace flatstream {

namespace {

double max_abs(std::span<const double> weights) {
  double m = 0.0;
  for (double w : weights) m = std::max(m, std::fabs(w));
  return m;
}

void check_bits(int bits, int lo, int hi, const char* what) {
  if (bits < lo || bits > hi) {
    fail(ErrorKind::kInvalidArgument, std::string(what) + " bit-width " + std::to_string(bits) + " out of range");
  }
}

/// ceil(log2(x)) for finite x > 0, exact.
int ceil_log2(double x) {
  int k = 0;
  double f = std::frexp(x, &k);  // x = f * 2^k, f in [0.5, 1)
  return f == 0.5 ? k - 1 : k;
}

/// floor(log2(x)) for finite x > 0, exact.
int floor_log2(double x) {
  int k = 0;
  std::frexp(x, &k);
  return k - 1;
}

}  // namespace

int choose_shift_bias(std::span<const double> weights, int bits) {
  check_bits(bits, 2, 16, "shift");
  const double m = max_abs(weights);
  if (weights.empty() || m == 0.0) fail(ErrorKind::kAllZeroWeights, "shift bias undefined for all-zero weights");
  const int e_max = (1 << (bits - 1)) - 2;
  return e_max - ceil_log2(m);
}

std::uint32_t quantize_shift(double w, const ShiftLayerParams& params) {
  const int e_max = params.exponent_max();
  const double x = std::fabs(w);
  const std::uint32_t sign_bit = (w < 0.0 ? 1u : 0u) << (params.bits - 1);
  if (x == 0.0 || std::isnan(w)) return params.zero_code();

  const double smallest = std::ldexp(1.0, -params.bias);
  int e;
  if (x >= std::ldexp(1.0, e_max - params.bias)) {
    e = e_max;  // saturate
  } else if (x < smallest) {
    // Between zero and the smallest magnitude; ties go to zero.
    if (x <= smallest * 0.5) return params.zero_code();
    e = 0;
  } else {
    const int lo = floor_log2(x) + params.bias;  // 2^(lo-b) <= x < 2^(lo+1-b)
    const double lower = std::ldexp(1.0, lo - params.bias);
    e = (x <= lower * 1.5) ? lo : lo + 1;  // tie toward the smaller magnitude
    e = std::min(e, e_max);
  }
  return sign_bit | static_cast<std::uint32_t>(e);
}

ShiftTerm unpack_shift(std::uint32_t code, const ShiftLayerParams& params) {
  const std::uint32_t field_mask = (1u << (params.bits - 1)) - 1u;
  const std::uint32_t field = code & field_mask;
  ShiftTerm t;
  if (field == field_mask) return t;
  t.zero = false;
  t.negative = ((code >> (params.bits - 1)) & 1u) != 0;
  t.exponent = static_cast<int>(field);
  return t;
}

double decode_shift(std::uint32_t code, const ShiftLayerParams& params) {
  ShiftTerm t = unpack_shift(code, params);
  if (t.zero) return 0.0;
  const double mag = std::ldexp(1.0, t.exponent - params.bias);
  return t.negative ? -mag : mag;
}

int choose_fixed_point(std::span<const double> weights, int bits) {
  check_bits(bits, 2, 16, "fixed");
  const double m = max_abs(weights);
  if (weights.empty() || m == 0.0) fail(ErrorKind::kAllZeroWeights, "binary point undefined for all-zero weights");
  const double top = static_cast<double>((1 << (bits - 1)) - 1);
  // Estimate, then walk to the exact boundary.
  int p = static_cast<int>(std::floor(std::log2(top / m)));
  while (std::ldexp(top, -p) < m) --p;
  while (std::ldexp(top, -(p + 1)) >= m) ++p;
  return p;
}

std::int32_t quantize_fixed(double w, const FixedFormat& fmt) {
  const double scaled = std::round(std::ldexp(w, fmt.point));  // half away from zero
  const double lo = fmt.mantissa_min();
  const double hi = fmt.mantissa_max();
  if (std::isnan(scaled)) return 0;
  return static_cast<std::int32_t>(std::clamp(scaled, lo, hi));
}

std::uint32_t encode_fixed(std::int32_t mantissa, int bits) {
  return static_cast<std::uint32_t>(mantissa) & ((bits >= 32) ? 0xffffffffu : ((1u << bits) - 1u));
}

std::int32_t mantissa_of(std::uint32_t code, int bits) {
  const std::uint32_t mask = (1u << bits) - 1u;
  std::uint32_t v = code & mask;
  if (v & (1u << (bits - 1))) return static_cast<std::int32_t>(v) - static_cast<std::int32_t>(1u << bits);
  return static_cast<std::int32_t>(v);
}

double decode_fixed(std::uint32_t code, const FixedFormat& fmt) {
  return std::ldexp(static_cast<double>(mantissa_of(code, fmt.bits)), -fmt.point);
}

std::uint32_t quantize_weight(double w, const WeightFormat& fmt) {
  if (const auto* s = std::get_if<ShiftLayerParams>(&fmt)) return quantize_shift(w, *s);
  const auto& f = std::get<FixedFormat>(fmt);
  return encode_fixed(quantize_fixed(w, f), f.bits);
}

double decode_weight(std::uint32_t code, const WeightFormat& fmt) {
  if (const auto* s = std::get_if<ShiftLayerParams>(&fmt)) return decode_shift(code, *s);
  return decode_fixed(code, std::get<FixedFormat>(fmt));
}

int format_bits(const WeightFormat& fmt) {
  return std::visit([](const auto& f) { return f.bits; }, fmt);
}

bool code_is_valid(std::uint32_t code, const WeightFormat& fmt) {
  const int bits = format_bits(fmt);
  if (code >> bits) return false;
  if (const auto* s = std::get_if<ShiftLayerParams>(&fmt)) {
    // Only the positive zero is canonical.
    return code != (s->zero_code() | (1u << (bits - 1)));
  }
  return true;
}

WeightFormat choose_format(std::span<const double> weights, bool shift, int bits) {
  const bool all_zero = max_abs(weights) == 0.0;
  if (shift) {
    return ShiftLayerParams{bits, all_zero ? 0 : choose_shift_bias(weights, bits)};
  }
  return FixedFormat{bits, all_zero ? 0 : choose_fixed_point(weights, bits)};
}

QuantTensor quantize_tensor(std::span<const double> weights, const std::vector<int>& shape,
                            const WeightFormat& fmt) {
  QuantTensor t;
  t.shape = shape;
  t.format = fmt;
  t.codes.resize(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) t.codes[i] = quantize_weight(weights[i], fmt);
  return t;
}

std::vector<double> decode_tensor(const QuantTensor& tensor) {
  std::vector<double> out(tensor.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = decode_weight(tensor.codes[i], tensor.format);
  return out;
}

std::int16_t quantize_8_8(double z) {
  const double scaled = std::round(std::ldexp(z, kAffineFracBits));
  if (std::isnan(scaled)) return 0;
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

FusedAffine fuse_bn(double gamma, double beta, double mean, double sigma) {
  if (!(sigma > 0.0)) fail(ErrorKind::kNonPositiveSigma, "BN sigma must be positive");
  const double scale = gamma / sigma;
  return FusedAffine{quantize_8_8(scale), quantize_8_8(beta - scale * mean)};
}

std::vector<FusedAffine> fuse_bn(std::span<const double> gamma, std::span<const double> beta,
                                 std::span<const double> mean, std::span<const double> sigma) {
  if (beta.size() != gamma.size() || mean.size() != gamma.size() || sigma.size() != gamma.size()) {
    fail(ErrorKind::kInconsistentInputs, "BN parameter vectors differ in length");
  }
  std::vector<FusedAffine> out(gamma.size());
  for (std::size_t c = 0; c < gamma.size(); ++c) out[c] = fuse_bn(gamma[c], beta[c], mean[c], sigma[c]);
  return out;
}

std::int64_t round_shift(std::int64_t value, int shift) {
  if (shift <= 0) return value * (std::int64_t{1} << -shift);
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  if (value >= 0) return (value + half) >> shift;
  return -((-value + half) >> shift);
}

std::uint8_t quantize_activation(std::int64_t value, int point) {
  const int shift = point - kActivationFracBits;
  if (value <= 0) return 0;
  if (shift < 0) {
    // Scaling up: saturate before the multiply can overflow.
    if (shift < -8 || value > (kActivationCodeMax >> -shift)) return kActivationCodeMax;
    return static_cast<std::uint8_t>(value << -shift);
  }
  if (shift >= 63) return 0;
  const std::int64_t r = round_shift(value, shift);
  return static_cast<std::uint8_t>(std::min<std::int64_t>(r, kActivationCodeMax));
}

}  // namespace flatstream
