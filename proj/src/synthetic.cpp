#include "shillbench/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "shillbench/random.hpp"

namespace shillbench {

namespace {

std::vector<std::string> numbered(const char* prefix, std::size_t n) {
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t k = 0; k < n; ++k) ids.push_back(prefix + std::to_string(k));
  return ids;
}

std::vector<double> normal_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  std::vector<double> m(rows * cols);
  for (double& v : m) v = scale * standard_normal(rng);
  return m;
}

}  // namespace

Dataset make_low_rank(const LowRankSpec& s) {
  if (s.n_users == 0 || s.n_items == 0 || s.rank == 0) {
    throw DataError("low-rank generator needs positive sizes");
  }
  Rng rng = make_rng(s.seed, 0x10a4);
  const auto u = normal_matrix(rng, s.n_users, s.rank, s.factor_scale);
  const auto v = normal_matrix(rng, s.n_items, s.rank, s.factor_scale);
  std::vector<Interaction> rows;
  rows.reserve(s.n_users * s.n_items);
  double lo = 0.0;
  double hi = 0.0;
  for (std::size_t a = 0; a < s.n_users; ++a) {
    for (std::size_t b = 0; b < s.n_items; ++b) {
      double r = s.offset;
      for (std::size_t f = 0; f < s.rank; ++f) r += u[a * s.rank + f] * v[b * s.rank + f];
      r += s.noise_sigma * standard_normal(rng);
      if (rows.empty()) lo = hi = r;
      lo = std::min(lo, r);
      hi = std::max(hi, r);
      rows.push_back({static_cast<Index>(a), static_cast<Index>(b), r, std::nullopt});
    }
  }
  return Dataset(numbered("u", s.n_users), numbered("i", s.n_items), std::move(rows),
                 std::vector<Provenance>(s.n_users, Provenance::kReal),
                 FeedbackKind::kExplicit, lo, hi);
}

Dataset make_skewed(const SkewedSpec& s) {
  if (s.n_users == 0 || s.n_items == 0 || s.rank == 0) {
    throw DataError("skewed generator needs positive sizes");
  }
  if (s.min_profile > s.n_items) throw DataError("min_profile exceeds the catalog");
  Rng rng = make_rng(s.seed, 0x5ce3);

  // Popularity rank is a seeded permutation so item index carries no signal.
  std::vector<std::size_t> rank_of(s.n_items);
  for (std::size_t i = 0; i < s.n_items; ++i) rank_of[i] = i;
  shuffle_in_place(rank_of, rng);
  std::vector<double> cumulative(s.n_items);
  double total = 0.0;
  for (std::size_t i = 0; i < s.n_items; ++i) {
    total += std::pow(static_cast<double>(rank_of[i] + 1), -s.zipf_exponent);
    cumulative[i] = total;
  }

  const double taste = 1.0 / std::sqrt(static_cast<double>(s.rank));
  const auto user_f = normal_matrix(rng, s.n_users, s.rank, taste);
  const auto item_f = normal_matrix(rng, s.n_items, s.rank, 1.0);
  std::vector<double> quality(s.n_items);
  for (double& q : quality) q = 0.5 * standard_normal(rng);

  std::vector<Interaction> rows;
  std::vector<bool> taken(s.n_items);
  for (std::size_t a = 0; a < s.n_users; ++a) {
    const double draw = std::exp(std::log(s.median_profile) + s.profile_spread * standard_normal(rng));
    const auto len = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(draw)),
                                             s.min_profile, s.n_items);
    std::fill(taken.begin(), taken.end(), false);
    std::vector<Index> items;
    // Popularity-weighted draws without replacement by rejection; the weights
    // are heavy-tailed but never zero, so this terminates quickly for
    // len << n_items and falls back to a sweep when the profile is large.
    std::size_t attempts = 0;
    while (items.size() < len && attempts < 50 * len) {
      ++attempts;
      const double x = uniform_unit(rng) * total;
      const auto i = static_cast<std::size_t>(
          std::upper_bound(cumulative.begin(), cumulative.end(), x) - cumulative.begin());
      const std::size_t item = std::min(i, s.n_items - 1);
      if (taken[item]) continue;
      taken[item] = true;
      items.push_back(static_cast<Index>(item));
    }
    for (std::size_t i = 0; items.size() < len && i < s.n_items; ++i) {
      if (!taken[i]) {
        taken[i] = true;
        items.push_back(static_cast<Index>(i));
      }
    }
    for (Index item : items) {
      double r = s.mean_rating + quality[item];
      for (std::size_t f = 0; f < s.rank; ++f) r += user_f[a * s.rank + f] * item_f[item * s.rank + f];
      r += s.noise_sigma * standard_normal(rng);
      rows.push_back({static_cast<Index>(a), item, std::clamp(std::round(r), 1.0, 5.0), std::nullopt});
    }
  }
  return Dataset(numbered("u", s.n_users), numbered("i", s.n_items), std::move(rows),
                 std::vector<Provenance>(s.n_users, Provenance::kReal),
                 FeedbackKind::kExplicit, 1.0, 5.0);
}

void to_json(nlohmann::json& j, const LowRankSpec& s) {
  j = {{"n_users", s.n_users}, {"n_items", s.n_items},         {"rank", s.rank},
       {"noise_sigma", s.noise_sigma}, {"factor_scale", s.factor_scale},
       {"offset", s.offset},   {"seed", s.seed}};
}

void to_json(nlohmann::json& j, const SkewedSpec& s) {
  j = {{"n_users", s.n_users},
       {"n_items", s.n_items},
       {"rank", s.rank},
       {"zipf_exponent", s.zipf_exponent},
       {"median_profile", s.median_profile},
       {"profile_spread", s.profile_spread},
       {"min_profile", s.min_profile},
       {"mean_rating", s.mean_rating},
       {"noise_sigma", s.noise_sigma},
       {"seed", s.seed}};
}

}  // namespace shillbench
