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

#include <sys/wait.h>

#include <array>
#include <cstdio>

#include "flatstream/model_ir.hpp"
#include "json.hpp"
#include "support/test_support.hpp"

#ifndef FLATSTREAM_CLI
#error "FLATSTREAM_CLI must name the CLI binary"
#endif

using namespace flatstream;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(FLATSTREAM_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string model(const std::string& name) { return testing::source_path("models/" + name).string(); }

// Text of the fenced block that follows "<!-- cli-help: NAME -->" in the README.
std::string documented_help(const std::string& readme, const std::string& name) {
  const std::string marker = "<!-- cli-help: " + name + " -->";
  auto pos = readme.find(marker);
  if (pos == std::string::npos) return "<missing>";
  pos = readme.find("```text\n", pos);
  const auto end = readme.find("```\n", pos + 8);
  return readme.substr(pos + 8, end - pos - 8);
}

}  // namespace

TEST_CASE("plan prints the unroll table") {
  const fs::path dir = testing::scratch_dir("cli_plan");
  const Run r = run("plan --model " + model("mobilenet_v1.net") + " --ipp 1 --run-manifest " +
                    (dir / "run.json").string());
  CHECK(r.code == 0);
  CHECK(r.out.find("Conv dw / s2  | 64 / 64     | 16 / 4 | 4 / 16") != std::string::npos);
  const auto manifest = nlohmann::json::parse(read_file(dir / "run.json"));
  CHECK(manifest["subcommand"] == "plan");
  CHECK(manifest["inputs"][0]["sha256"].get<std::string>().size() == 64);
}

TEST_CASE("json mode is machine readable") {
  const fs::path dir = testing::scratch_dir("cli_json");
  const Run r = run("plan --json --model " + model("toy2.net") + " --run-manifest " + (dir / "run.json").string());
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["layers"][0]["u"] == 2);
  CHECK(j["ipp"] == "1/1");
}

TEST_CASE("quantize, simulate, emit and eval chain") {
  const fs::path dir = testing::scratch_dir("cli_chain");
  const std::string ck = (dir / "c.tmto").string();
  const std::string rm = " --run-manifest " + (dir / "run.json").string() + " --force";
  CHECK(run("quantize --model " + model("toy2.net") + " --out " + ck + rm).code == 0);
  CHECK(run("simulate --checkpoint " + ck + " --count 2 --assert-bitexact --ipp 1/2" + rm).code == 0);
  CHECK(run("plan --model " + model("toy2.net") + " --ipp 1/2 --out " + (dir / "p.txt").string() + rm).code == 0);
  CHECK(run("simulate --checkpoint " + ck + " --plan " + (dir / "p.txt").string() + " --assert-bitexact" + rm).code ==
        0);
  CHECK(run("emit --checkpoint " + ck + " --out " + (dir / "rtl").string() + rm).code == 0);
  CHECK(fs::exists(dir / "rtl" / "manifest.txt"));
  CHECK(run("gen-dataset --model " + model("toy2.net") + " --samples 8 --out " + (dir / "d.bin").string() + rm).code ==
        0);
  const Run e = run("eval --json --checkpoint " + ck + " --data " + (dir / "d.bin").string() + rm);
  CHECK(e.code == 0);
  CHECK(nlohmann::json::parse(e.out)["samples"] == 8);
}

TEST_CASE("search writes a checkpoint and a trace") {
  const fs::path dir = testing::scratch_dir("cli_search");
  const std::string rm = " --run-manifest " + (dir / "run.json").string();
  const std::string net = model("tiny_classifier.net");
  REQUIRE(run("gen-dataset --model " + net + " --samples 32 --out " + (dir / "d.bin").string() + rm).code == 0);
  const Run r = run("search --json --model " + net + " --data " + (dir / "d.bin").string() +
                    " --alpha-frac 0.95 --epochs 0 --h-budget 0 --out " + (dir / "s.tmto").string() + " --trace " +
                    (dir / "t.txt").string() + rm);
  CHECK(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["final_cost"].get<double>() <= j["initial_cost"].get<double>());
  CHECK(fs::exists(dir / "s.tmto"));
  CHECK(read_file(dir / "t.txt").rfind("# alpha_budget", 0) == 0);
}

TEST_CASE("exit codes follow the error class") {
  const fs::path dir = testing::scratch_dir("cli_errors");
  const std::string rm = " --run-manifest " + (dir / "run.json").string();
  write_file(dir / "bad.net", "format flatstream-net 1\ninput 4 4 1\nclasses 3\nlayer pw out=1\n");
  write_file(dir / "junk.tmto", "not a checkpoint");
  write_file(dir / "tight.txt", "1 inf inf inf\n");
  CHECK(run("plan" + rm).code == 2);
  CHECK(run("frobnicate" + rm).code == 2);
  CHECK(run("plan --model " + model("toy2.net") + " --ipp 2/3" + rm).code == 2);
  CHECK(run("plan --model " + (dir / "bad.net").string() + rm).code == 3);
  CHECK(run("emit --checkpoint " + (dir / "junk.tmto").string() + " --out " + (dir / "x").string() + rm).code == 3);
  CHECK(run("partition --model " + model("toy2.net") + " --budgets " + (dir / "tight.txt").string() + rm).code == 5);
  CHECK(run("plan --model " + (dir / "missing.net").string() + rm).code == 7);
  write_file(dir / "exists.tmto", "x");
  CHECK(run("quantize --model " + model("toy2.net") + " --out " + (dir / "exists.tmto").string() + rm).code == 7);
}

TEST_CASE("help output matches the README") {
  const std::string readme = read_file(testing::source_path("README.md"));
  for (const std::string sub : {"", "plan", "quantize", "search", "estimate", "simulate", "emit", "partition", "eval",
                                "gen-dataset", "gen-weights"}) {
    const Run r = run(sub.empty() ? "--help" : sub + " --help");
    INFO("help for '" << sub << "'");
    CHECK(r.code == 0);
    CHECK(documented_help(readme, sub.empty() ? "flatstream" : sub) == r.out);
  }
}
