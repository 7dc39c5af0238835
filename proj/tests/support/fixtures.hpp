// Copyright 2026 The hihash Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "hihash/error.hpp"
#include "hihash/hierarchy.hpp"

namespace fixtures {

/// K = 2, C = (4, 2), leaves {0, 1} under 0 and {2, 3} under 1, sigma2 = (1, 4).
inline hihash::LabelTaxonomy small_taxonomy() {
  hihash::LabelTaxonomy tax;
  tax.class_counts = {4, 2};
  tax.parents = {{0, 0, 1, 1}};
  tax.sigma2 = {1.0, 4.0};
  return tax;
}

/// Removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = info ? std::string(info->test_suite_name()) + "_" + info->name() : "hihash";
    path_ = std::filesystem::temp_directory_path() /
            ("hihash_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures

/// Asserts that the statement throws hihash::Error with the given code.
#define EXPECT_HIHASH_ERROR(stmt, expected_code)                                         \
  do {                                                                                   \
    try {                                                                                \
      stmt;                                                                              \
      ADD_FAILURE() << "expected " << hihash::to_string(expected_code) << ", no throw";  \
    } catch (const hihash::Error& e__) {                                                 \
      EXPECT_EQ(e__.code(), expected_code) << e__.what();                                \
    }                                                                                    \
  } while (false)
