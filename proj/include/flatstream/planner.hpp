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

#include <string>
#include <string_view>
#include <vector>

#include "flatstream/model_ir.hpp"

namespace flatstream {

/// Input pixel rate 1/D: one pixel enters the first layer every D cycles.
struct Ipp {
  int denominator = 1;

  /// Accepts "1", "1/D" or a bare integer D >= 1 written as "1/D".
  static Ipp parse(std::string_view text);
  std::string text() const;
  friend bool operator==(const Ipp&, const Ipp&) = default;
};

struct LayerUnroll {
  int unroll_in = 1;   // U
  int unroll_out = 1;  // U'
  int t_in = 1;        // cycles between input pixels
  int t_out = 1;       // cycles between output pixels

  friend bool operator==(const LayerUnroll&, const LayerUnroll&) = default;
};

struct UnrollPlan {
  Ipp ipp;
  std::vector<LayerUnroll> layers;

  friend bool operator==(const UnrollPlan&, const UnrollPlan&) = default;
};

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }
/// ceil(C/U): cycles an input pixel occupies the compute engine.
inline int input_phases(const LayerSpec& l, const LayerUnroll& u) { return ceil_div(l.in_channels, u.unroll_in); }
/// ceil(C'/U'): cycles the time-shared BN spends on one output pixel.
inline int output_phases(const LayerSpec& l, const LayerUnroll& u) { return ceil_div(l.out_channels, u.unroll_out); }

/// T_in(0) = D, T_out = T_in * S^2, T_in(l+1) = T_out(l),
/// U = ceil(C / T_in), U' = ceil(C' / T_out).
UnrollPlan match_throughput(const NetworkSpec& net, Ipp ipp);

/// Throws PlanMismatch when the plan does not belong to the network.
void check_plan(const NetworkSpec& net, const UnrollPlan& plan);

/// Row label in the style "Conv dw / s2".
std::string layer_type_label(const LayerSpec& layer);

/// Text table: a "# ipp 1/D" line, a header, then one row per layer with
/// Types | C / C' | U / U' | C/U / C'/U' | T_in | T_out.
std::string format_plan(const NetworkSpec& net, const UnrollPlan& plan);
UnrollPlan parse_plan(std::string_view text);

}  // namespace flatstream
