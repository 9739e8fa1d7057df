#pragma once

#include <atomic>
#include <filesystem>
#include <set>
#include <string>
#include <tuple>
#include <unistd.h>
#include <vector>

#include "shillbench/dataset.hpp"
#include "shillbench/random.hpp"

namespace testing_support {

using namespace shillbench;

/// Sparse random explicit dataset with integer ratings in 1..5. Every user
/// gets at least `min_profile` distinct items.
inline Dataset random_dataset(std::uint64_t seed, std::size_t n_users, std::size_t n_items,
                              double density, std::size_t min_profile = 1) {
  Rng rng = make_rng(seed, 0x7e57);
  std::vector<Triple> triples;
  for (std::size_t u = 0; u < n_users; ++u) {
    std::vector<std::size_t> items;
    for (std::size_t i = 0; i < n_items; ++i) {
      if (uniform_unit(rng) < density) items.push_back(i);
    }
    if (items.size() < min_profile) {
      std::vector<std::size_t> all(n_items);
      for (std::size_t i = 0; i < n_items; ++i) all[i] = i;
      items = sample_without_replacement(all, min_profile, rng);
    }
    for (std::size_t i : items) {
      triples.push_back({"u" + std::to_string(u), "i" + std::to_string(i),
                         static_cast<double>(1 + uniform_index(rng, 5)), std::nullopt});
    }
  }
  return Dataset::from_triples(triples, FeedbackKind::kExplicit, std::make_pair(1.0, 5.0));
}

inline std::set<std::tuple<std::string, std::string, double>> triple_set(const Dataset& d) {
  std::set<std::tuple<std::string, std::string, double>> out;
  for (const auto& x : d.interactions()) {
    out.emplace(d.user_id(x.user), d.item_id(x.item), x.rating);
  }
  return out;
}

/// Fresh empty directory under the system temp dir, unique per call.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("shillbench_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
