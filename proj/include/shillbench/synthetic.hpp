#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>

#include "shillbench/dataset.hpp"

namespace shillbench {

/// Dense low-rank explicit data: r_ui = offset + <U_u, V_i> + sigma * noise,
/// with U and V drawn N(0, factor_scale^2). Every (user, item) pair is observed
/// and ratings are left continuous.
struct LowRankSpec {
  std::size_t n_users = 50;
  std::size_t n_items = 40;
  std::size_t rank = 4;
  double noise_sigma = 0.1;
  double factor_scale = 0.7;
  double offset = 3.0;
  std::uint64_t seed = 0;
};

Dataset make_low_rank(const LowRankSpec& spec);

/// Sparse 1..5 ratings shaped like a small public rating log: Zipf item
/// popularity, log-normal profile lengths and ratings driven by a latent
/// taste model plus item quality.
struct SkewedSpec {
  std::size_t n_users = 500;
  std::size_t n_items = 300;
  std::size_t rank = 5;
  double zipf_exponent = 0.8;
  double median_profile = 20.0;
  double profile_spread = 0.5;  // sigma of log profile length
  std::size_t min_profile = 5;
  double mean_rating = 3.6;
  double noise_sigma = 0.5;
  std::uint64_t seed = 0;
};

Dataset make_skewed(const SkewedSpec& spec);

void to_json(nlohmann::json& j, const LowRankSpec& s);
void to_json(nlohmann::json& j, const SkewedSpec& s);

}  // namespace shillbench
