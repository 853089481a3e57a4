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

#include <fstream>
#include <sstream>

#include "flatstream/error.hpp"
#include "flatstream/planner.hpp"
#include "support/test_support.hpp"

using namespace flatstream;

namespace {

std::vector<std::string> reference_rows() {
  std::ifstream in(testing::source_path("tests/golden/mobilenet_unroll_table.txt"));
  std::vector<std::string> rows;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) rows.push_back(line);
  }
  return rows;
}

// "Types | C / C' | U / U' | C/U / C'/U'" from a formatted plan, column padding removed.
std::vector<std::string> plan_rows(const std::string& text) {
  std::vector<std::string> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // ipp
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, '|');) {
      const auto b = cell.find_first_not_of(' ');
      const auto e = cell.find_last_not_of(' ');
      cells.push_back(cell.substr(b, e - b + 1));
    }
    rows.push_back(cells[0] + " | " + cells[1] + " | " + cells[2] + " | " + cells[3]);
  }
  return rows;
}

}  // namespace

TEST_CASE("mobilenet plan at ipp 1 reproduces the reference unroll table") {
  const NetworkSpec net = testing::load_fixture_net("mobilenet_v1.net");
  const auto expected = reference_rows();
  REQUIRE(expected.size() == 21);
  const auto got = plan_rows(format_plan(net, match_throughput(net, Ipp{1})));
  REQUIRE(got.size() == 21);
  for (std::size_t i = 0; i < 21; ++i) {
    INFO("row " << i);
    CHECK(got[i] == expected[i]);
  }
}

TEST_CASE("throughput matching rules") {
  const NetworkSpec net = testing::load_fixture_net("mobilenet_v1.net");
  for (int d : {1, 2, 3, 7}) {
    const UnrollPlan p = match_throughput(net, Ipp{d});
    long long t = d;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      const LayerSpec& l = net.layers[i];
      const LayerUnroll& u = p.layers[i];
      CHECK(u.t_in == t);
      CHECK(u.t_out == t * l.stride * l.stride);
      CHECK(u.unroll_in == (l.in_channels + t - 1) / t);
      CHECK(u.unroll_out == (l.out_channels + u.t_out - 1) / u.t_out);
      // A core keeps pace: channel blocks per input pixel fit in its pixel interval.
      CHECK(input_phases(l, u) <= u.t_in);
      CHECK(output_phases(l, u) <= u.t_out);
      if (i + 1 < net.layers.size()) CHECK(u.unroll_out == p.layers[i + 1].unroll_in);
      t = u.t_out;
    }
  }
}

TEST_CASE("plan text round trips and is checked against the network") {
  const NetworkSpec net = testing::load_fixture_net("mobilenet_v1.net");
  const UnrollPlan p = match_throughput(net, Ipp{2});
  const std::string text = format_plan(net, p);
  CHECK(text.rfind("# ipp 1/2\n", 0) == 0);
  CHECK(parse_plan(text) == p);
  CHECK_NOTHROW(check_plan(net, p));
  UnrollPlan bad = p;
  bad.layers[3].unroll_in += 1;
  CHECK_THROWS_AS(check_plan(net, bad), Error);
  bad = p;
  bad.layers.pop_back();
  CHECK_THROWS_AS(check_plan(net, bad), Error);
}

TEST_CASE("ipp parsing") {
  CHECK(Ipp::parse("1").denominator == 1);
  CHECK(Ipp::parse("1/4").denominator == 4);
  CHECK(Ipp::parse(" 1 / 3 ").denominator == 3);
  CHECK(Ipp::parse("1/4").text() == "1/4");
  CHECK_THROWS_AS(Ipp::parse("2"), Error);
  CHECK_THROWS_AS(Ipp::parse("2/3"), Error);
  CHECK_THROWS_AS(Ipp::parse("1/0"), Error);
  CHECK_THROWS_AS(Ipp::parse("x"), Error);
}

TEST_CASE("layer labels") {
  const NetworkSpec net = testing::load_fixture_net("mobilenet_v1.net");
  CHECK(layer_type_label(net.layers[0]) == "Conv / s2");
  CHECK(layer_type_label(net.layers[3]) == "Conv dw / s2");
  CHECK(layer_type_label(net.layers[19]) == "Avg Pool / s1");
  CHECK(layer_type_label(net.layers[20]) == "FC / s1");
}
