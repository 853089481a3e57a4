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
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace flatstream::cli {

std::string sha256_hex(std::string_view bytes);

// Hashes a file, or every regular file under a directory in name order.
std::string digest_path(const std::filesystem::path& path);

class RunManifest {
 public:
  RunManifest(std::string subcommand, std::uint64_t seed);

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  void set_option(const std::string& key, nlohmann::json value);
  void set_result(nlohmann::json result) { result_ = std::move(result); }

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::string subcommand_;
  std::uint64_t seed_;
  nlohmann::json options_ = nlohmann::json::object();
  nlohmann::json inputs_ = nlohmann::json::array();
  nlohmann::json outputs_ = nlohmann::json::array();
  nlohmann::json result_;
};

}  // namespace flatstream::cli
