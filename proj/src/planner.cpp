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

#include "flatstream/planner.hpp"

#include <charconv>
#include <sstream>

#include "flatstream/error.hpp"

namespace flatstream {
namespace {

int parse_positive(std::string_view s, const char* what) {
  int v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || v < 1) {
    fail(ErrorKind::kInvalidArgument, std::string("bad ") + what + ": '" + std::string(s) + "'");
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      parts.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return parts;
}

// "a / b" -> (a, b)
std::pair<int, int> parse_pair(std::string_view cell) {
  const auto parts = split(cell, '/');
  if (parts.size() != 2) fail(ErrorKind::kMalformedDescriptor, "plan cell '" + std::string(cell) + "' is not a pair");
  return {parse_positive(parts[0], "plan value"), parse_positive(parts[1], "plan value")};
}

}  // namespace

Ipp Ipp::parse(std::string_view text) {
  text = trim(text);
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) {
    const int v = parse_positive(text, "input pixel rate");
    if (v != 1) fail(ErrorKind::kInvalidArgument, "input pixel rate must be 1 or 1/D");
    return Ipp{1};
  }
  if (parse_positive(trim(text.substr(0, slash)), "input pixel rate numerator") != 1) {
    fail(ErrorKind::kInvalidArgument, "input pixel rate numerator must be 1");
  }
  return Ipp{parse_positive(trim(text.substr(slash + 1)), "input pixel rate denominator")};
}

std::string Ipp::text() const { return "1/" + std::to_string(denominator); }

UnrollPlan match_throughput(const NetworkSpec& net, Ipp ipp) {
  if (ipp.denominator < 1) fail(ErrorKind::kInvalidArgument, "input pixel rate denominator must be >= 1");
  UnrollPlan plan;
  plan.ipp = ipp;
  long long t_in = ipp.denominator;
  for (const LayerSpec& l : net.layers) {
    const long long t_out = t_in * l.stride * l.stride;
    if (t_out > (1LL << 30)) fail(ErrorKind::kInvalidArgument, "pixel interval overflows");
    LayerUnroll u;
    u.t_in = static_cast<int>(t_in);
    u.t_out = static_cast<int>(t_out);
    u.unroll_in = ceil_div(l.in_channels, u.t_in);
    u.unroll_out = ceil_div(l.out_channels, u.t_out);
    plan.layers.push_back(u);
    t_in = t_out;
  }
  return plan;
}

void check_plan(const NetworkSpec& net, const UnrollPlan& plan) {
  if (plan.layers.size() != net.layers.size()) {
    fail(ErrorKind::kPlanMismatch, "plan has " + std::to_string(plan.layers.size()) + " rows, network has " +
                                       std::to_string(net.layers.size()) + " layers");
  }
  if (plan.ipp.denominator < 1) fail(ErrorKind::kPlanMismatch, "plan input pixel rate is invalid");
  const UnrollPlan expected = match_throughput(net, plan.ipp);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!(plan.layers[i] == expected.layers[i])) {
      fail(ErrorKind::kPlanMismatch, "plan row " + std::to_string(i) + " disagrees with throughput matching");
    }
  }
}

std::string layer_type_label(const LayerSpec& l) {
  std::string base;
  switch (l.kind) {
    case LayerKind::kConv: base = "Conv"; break;
    case LayerKind::kDepthwiseConv: base = "Conv dw"; break;
    case LayerKind::kPointwiseConv: base = "Conv pw"; break;
    case LayerKind::kAvgPool: base = "Avg Pool"; break;
    case LayerKind::kFullyConnected: base = "FC"; break;
  }
  return base + " / s" + std::to_string(l.stride);
}

std::string format_plan(const NetworkSpec& net, const UnrollPlan& plan) {
  if (plan.layers.size() != net.layers.size()) fail(ErrorKind::kPlanMismatch, "plan row count disagrees with network");
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Types", "C / C'", "U / U'", "C/U / C'/U'", "T_in", "T_out"});
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    const LayerUnroll& u = plan.layers[i];
    rows.push_back({layer_type_label(l), std::to_string(l.in_channels) + " / " + std::to_string(l.out_channels),
                    std::to_string(u.unroll_in) + " / " + std::to_string(u.unroll_out),
                    std::to_string(input_phases(l, u)) + " / " + std::to_string(output_phases(l, u)),
                    std::to_string(u.t_in), std::to_string(u.t_out)});
  }
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream os;
  os << "# ipp " << plan.ipp.text() << "\n";
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c > 0) line += " | ";
      line += r[c];
      if (c + 1 < r.size()) line.append(width[c] - r[c].size(), ' ');
    }
    os << line << "\n";
  }
  return os.str();
}

UnrollPlan parse_plan(std::string_view text) {
  UnrollPlan plan;
  bool have_ipp = false, have_header = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string_view body = trim(line.substr(1));
      if (body.substr(0, 4) == "ipp ") {
        plan.ipp = Ipp::parse(body.substr(4));
        have_ipp = true;
      }
      continue;
    }
    const auto cells = split(line, '|');
    if (!have_header) {
      if (cells.empty() || cells[0] != "Types") fail(ErrorKind::kMalformedDescriptor, "plan header missing");
      have_header = true;
      continue;
    }
    if (cells.size() != 6) fail(ErrorKind::kMalformedDescriptor, "plan row needs 6 columns: '" + std::string(line) + "'");
    LayerUnroll u;
    std::tie(u.unroll_in, u.unroll_out) = parse_pair(cells[2]);
    u.t_in = parse_positive(cells[4], "T_in");
    u.t_out = parse_positive(cells[5], "T_out");
    plan.layers.push_back(u);
  }
  if (!have_ipp) fail(ErrorKind::kMalformedDescriptor, "plan lacks an '# ipp' line");
  return plan;
}

}  // namespace flatstream
