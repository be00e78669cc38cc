#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "hintloop/taxonomy.hpp"

namespace hintloop::testing {

inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("hintloop-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
              std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::filesystem::path source_path(const std::string& rel) {
  return std::filesystem::path(HINTLOOP_SOURCE_DIR) / rel;
}

/// n policies "p00".."p<n-1>", tiers cycling 1..3, categories cycling over 4.
inline PolicyTaxonomy make_taxonomy(int n) {
  static const char* kCats[] = {"violence", "nudity", "profanity", "drugs"};
  std::vector<Policy> out;
  for (int i = 0; i < n; ++i) {
    char id[8];
    std::snprintf(id, sizeof id, "p%02d", i);
    out.push_back({id, std::string("Policy ") + id, kCats[i % 4], 1 + i % 3, true});
  }
  return PolicyTaxonomy(std::move(out));
}

}  // namespace hintloop::testing
