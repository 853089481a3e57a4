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

#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace flatstream {

/// Power-of-two weight format: x = s * 2^(e - bias).
///
/// Codeword layout (n bits): bit n-1 is the sign, the low n-1 bits hold the
/// exponent field. A field of all ones is the zero code regardless of sign;
/// every other field value is the exponent e directly, so e lies in
/// [0, 2^(n-1) - 2].
struct ShiftLayerParams {
  int bits = 3;
  int bias = 0;

  int exponent_max() const { return (1 << (bits - 1)) - 2; }
  std::uint32_t zero_code() const { return (1u << (bits - 1)) - 1u; }
  friend bool operator==(const ShiftLayerParams&, const ShiftLayerParams&) = default;
};

/// Two's-complement mantissa m of `bits` bits; x = m * 2^-point.
struct FixedFormat {
  int bits = 8;
  int point = 0;

  std::int32_t mantissa_min() const { return -(1 << (bits - 1)); }
  std::int32_t mantissa_max() const { return (1 << (bits - 1)) - 1; }
  friend bool operator==(const FixedFormat&, const FixedFormat&) = default;
};

using WeightFormat = std::variant<ShiftLayerParams, FixedFormat>;

/// Unsigned 3.5 activations: codes 0..255 stand for code * 2^-5.
inline constexpr int kActivationBits = 8;
inline constexpr int kActivationFracBits = 5;
inline constexpr int kActivationCodeMax = 255;

/// BN folded into a per-channel affine with both factors in signed 8.8.
struct FusedAffine {
  std::int16_t scale = 256;
  std::int16_t offset = 0;

  double scale_value() const { return scale / 256.0; }
  double offset_value() const { return offset / 256.0; }
  friend bool operator==(const FusedAffine&, const FusedAffine&) = default;
};
inline constexpr int kAffineFracBits = 8;

struct QuantTensor {
  std::vector<int> shape;
  std::vector<std::uint32_t> codes;
  WeightFormat format;
};

// Shift arithmetic ----------------------------------------------------------

/// Largest bias b with 2^(e_max - b) >= max|w|. Throws AllZeroWeights.
int choose_shift_bias(std::span<const double> weights, int bits);
std::uint32_t quantize_shift(double w, const ShiftLayerParams& params);
double decode_shift(std::uint32_t code, const ShiftLayerParams& params);

struct ShiftTerm {
  bool zero = true;
  bool negative = false;
  int exponent = 0;
};
ShiftTerm unpack_shift(std::uint32_t code, const ShiftLayerParams& params);

// Fixed-point arithmetic ----------------------------------------------------

/// Largest point p with max|w| <= (2^(n-1) - 1) * 2^-p. Throws AllZeroWeights.
int choose_fixed_point(std::span<const double> weights, int bits);
std::int32_t quantize_fixed(double w, const FixedFormat& fmt);
std::uint32_t encode_fixed(std::int32_t mantissa, int bits);
std::int32_t mantissa_of(std::uint32_t code, int bits);
double decode_fixed(std::uint32_t code, const FixedFormat& fmt);

// Either arithmetic ---------------------------------------------------------

std::uint32_t quantize_weight(double w, const WeightFormat& fmt);
double decode_weight(std::uint32_t code, const WeightFormat& fmt);
int format_bits(const WeightFormat& fmt);
bool code_is_valid(std::uint32_t code, const WeightFormat& fmt);

/// Picks bias/point from the tensor's extrema; all-zero tensors get 0.
WeightFormat choose_format(std::span<const double> weights, bool shift, int bits);
QuantTensor quantize_tensor(std::span<const double> weights, const std::vector<int>& shape,
                            const WeightFormat& fmt);
std::vector<double> decode_tensor(const QuantTensor& tensor);

// BN fusion and activations -------------------------------------------------

/// round-half-away-from-zero of z * 2^8, saturated to int16.
std::int16_t quantize_8_8(double z);
FusedAffine fuse_bn(double gamma, double beta, double mean, double sigma);
std::vector<FusedAffine> fuse_bn(std::span<const double> gamma, std::span<const double> beta,
                                 std::span<const double> mean, std::span<const double> sigma);

/// Rounds value * 2^-shift half away from zero; negative shifts scale up.
std::int64_t round_shift(std::int64_t value, int shift);

/// Requantizes a value held at binary point `point` to an unsigned 3.5 code.
/// ReLU falls out of the clamp at zero.
std::uint8_t quantize_activation(std::int64_t value, int point);

inline double decode_activation(std::uint8_t code) { return code / 32.0; }

}  // namespace flatstream
