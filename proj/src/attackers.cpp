#include "shillbench/attackers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "shillbench/random.hpp"

namespace shillbench {

void AttackBudget::validate(std::size_t n_items, std::size_t selected_used) const {
  if (target_items.empty()) throw AttackError("attack budget has no target items");
  std::vector<bool> seen(n_items, false);
  for (Index t : target_items) {
    if (t >= n_items) throw AttackError("target item outside the catalog");
    if (seen[t]) throw AttackError("duplicate target item");
    seen[t] = true;
  }
  if (filler_size + selected_used + target_items.size() > n_items) {
    throw AttackError("attack budget infeasible: filler + selected + targets exceeds the catalog");
  }
  if (!(rating_min <= rating_max) || !std::isfinite(rating_min) ||
      !std::isfinite(rating_max)) {
    throw AttackError("invalid rating range in attack budget");
  }
  if (!(rating_step > 0.0)) throw AttackError("rating_step must be positive");
}

void to_json(nlohmann::json& j, const AttackBudget& b) {
  j = {{"n_fake_users", b.n_fake_users}, {"filler_size", b.filler_size},
       {"selected_size", b.selected_size}, {"target_items", b.target_items},
       {"rating_min", b.rating_min},     {"rating_max", b.rating_max},
       {"rating_step", b.rating_step}};
}

DatasetStats compute_stats(const Dataset& d) {
  DatasetStats s;
  s.n_items = d.n_items();
  s.n_ratings = d.n_interactions();
  s.item_mean.assign(d.n_items(), 0.0);
  s.item_std.assign(d.n_items(), 0.0);
  s.item_degree.assign(d.n_items(), 0);

  // Summing sorted values makes the statistics independent of input order.
  auto mean_std = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    std::vector<double> sq(v.size());
    for (std::size_t n = 0; n < v.size(); ++n) sq[n] = (v[n] - mean) * (v[n] - mean);
    std::sort(sq.begin(), sq.end());
    double ss = 0.0;
    for (double x : sq) ss += x;
    return std::pair{mean, std::sqrt(ss / static_cast<double>(v.size()))};
  };

  if (!d.empty()) {
    std::vector<double> all;
    all.reserve(d.n_interactions());
    for (const auto& x : d.interactions()) all.push_back(x.rating);
    std::tie(s.global_mean, s.global_std) = mean_std(all);
  }
  for (Index i = 0; i < d.n_items(); ++i) {
    const auto raters = d.item_users(i);
    s.item_degree[i] = raters.size();
    if (raters.empty()) {
      s.item_mean[i] = s.global_mean;
      s.item_std[i] = s.global_std;
      continue;
    }
    std::vector<double> r;
    r.reserve(raters.size());
    for (Index u : raters) r.push_back(*d.rating(u, i));
    std::tie(s.item_mean[i], s.item_std[i]) = mean_std(r);
  }
  s.popularity.resize(d.n_items());
  std::iota(s.popularity.begin(), s.popularity.end(), Index{0});
  std::stable_sort(s.popularity.begin(), s.popularity.end(), [&](Index a, Index b) {
    return s.item_degree[a] > s.item_degree[b];
  });
  return s;
}

double round_rating(double value, double rating_min, double rating_max, double step) {
  const double k = std::round((value - rating_min) / step);
  return std::clamp(rating_min + k * step, rating_min, rating_max);
}

namespace {

enum class FillerRating { kGlobal, kItem, kMinimum };

struct ProfilePlan {
  std::vector<Index> selected;
  std::vector<Index> exclude_from_fillers;
  FillerRating filler_rating = FillerRating::kGlobal;
};

void check_stats(const DatasetStats& stats) {
  if (stats.n_ratings == 0) throw AttackError("attacker received an empty exposed dataset");
}

double draw_filler_rating(const DatasetStats& stats, const AttackBudget& b,
                          FillerRating mode, Index item, Rng& rng) {
  switch (mode) {
    case FillerRating::kMinimum:
      return b.rating_min;
    case FillerRating::kItem:
      if (stats.item_degree[item] > 0) {
        return round_rating(stats.item_mean[item] + stats.item_std[item] * standard_normal(rng),
                            b.rating_min, b.rating_max, b.rating_step);
      }
      [[fallthrough]];
    case FillerRating::kGlobal:
      break;
  }
  return round_rating(stats.global_mean + stats.global_std * standard_normal(rng),
                      b.rating_min, b.rating_max, b.rating_step);
}

/// Shared profile builder: targets and selected items at rating_max, fillers
/// drawn uniformly from the items left over.
FakeProfiles build_profiles(const DatasetStats& stats, const AttackBudget& b,
                            const std::function<ProfilePlan(Rng&)>& plan_for,
                            std::size_t selected_used, std::uint64_t seed) {
  check_stats(stats);
  b.validate(stats.n_items, selected_used);
  FakeProfiles out;
  Rng rng = make_rng(seed, 0xa77ac);
  for (std::size_t f = 0; f < b.n_fake_users; ++f) {
    const ProfilePlan plan = plan_for(rng);
    std::vector<bool> taken(stats.n_items, false);
    FakeProfile profile;
    profile.user_id = fake_user_id(b.first_fake_ordinal + f);
    for (Index t : b.target_items) {
      taken[t] = true;
      profile.ratings.emplace_back(t, b.rating_max);
    }
    for (Index s : plan.selected) {
      if (taken[s]) continue;
      taken[s] = true;
      profile.ratings.emplace_back(s, b.rating_max);
    }
    std::vector<bool> blocked = taken;
    for (Index x : plan.exclude_from_fillers) blocked[x] = true;
    std::vector<Index> pool;
    for (Index i = 0; i < stats.n_items; ++i) {
      if (!blocked[i]) pool.push_back(i);
    }
    if (pool.size() < b.filler_size) {
      throw AttackError("attack budget infeasible: not enough filler candidates");
    }
    for (Index i : sample_without_replacement(std::move(pool), b.filler_size, rng)) {
      profile.ratings.emplace_back(i, draw_filler_rating(stats, b, plan.filler_rating, i, rng));
    }
    std::sort(profile.ratings.begin(), profile.ratings.end());
    out.profiles.push_back(std::move(profile));
  }
  return out;
}

}  // namespace

FakeProfiles random_attack(const DatasetStats& stats, const AttackBudget& budget,
                           std::uint64_t seed) {
  return build_profiles(
      stats, budget, [](Rng&) { return ProfilePlan{{}, {}, FillerRating::kGlobal}; }, 0,
      seed);
}

FakeProfiles average_attack(const DatasetStats& stats, const AttackBudget& budget,
                            std::uint64_t seed) {
  return build_profiles(
      stats, budget, [](Rng&) { return ProfilePlan{{}, {}, FillerRating::kItem}; }, 0, seed);
}

FakeProfiles bandwagon_attack(const DatasetStats& stats, const AttackBudget& budget,
                              std::uint64_t seed) {
  if (budget.selected_size == 0) throw AttackError("bandwagon attack needs selected_size >= 1");
  std::vector<bool> is_target(stats.n_items, false);
  for (Index t : budget.target_items) {
    if (t < stats.n_items) is_target[t] = true;
  }
  std::vector<Index> selected;
  for (Index i : stats.popularity) {
    if (selected.size() == budget.selected_size) break;
    if (!is_target[i]) selected.push_back(i);
  }
  return build_profiles(
      stats, budget,
      [&](Rng&) { return ProfilePlan{selected, {}, FillerRating::kGlobal}; },
      budget.selected_size, seed);
}

FakeProfiles segment_attack(const DatasetStats& stats, const AttackBudget& budget,
                            const std::vector<Index>& segment, std::uint64_t seed) {
  if (segment.empty()) throw AttackError("segment attack needs a nonempty segment");
  for (Index s : segment) {
    if (s >= stats.n_items) throw AttackError("segment item outside the catalog");
    if (std::find(budget.target_items.begin(), budget.target_items.end(), s) !=
        budget.target_items.end()) {
      throw AttackError("segment overlaps the target items");
    }
  }
  const std::size_t used = std::min(budget.selected_size, segment.size());
  return build_profiles(
      stats, budget,
      [&](Rng& rng) {
        return ProfilePlan{sample_without_replacement(segment, used, rng), segment,
                           FillerRating::kMinimum};
      },
      used, seed);
}

std::vector<Index> co_rating_segment(const Dataset& d, Index target, std::size_t size) {
  if (target >= d.n_items()) throw AttackError("target item outside the catalog");
  std::vector<std::size_t> count(d.n_items(), 0);
  for (Index u : d.item_users(target)) {
    for (const auto& x : d.user_interactions(u)) ++count[x.item];
  }
  count[target] = 0;
  std::vector<Index> items;
  for (Index i = 0; i < d.n_items(); ++i) {
    if (count[i] > 0) items.push_back(i);
  }
  std::stable_sort(items.begin(), items.end(),
                   [&](Index a, Index b) { return count[a] > count[b]; });
  if (items.size() > size) items.resize(size);
  return items;
}

// ---------------------------------------------------------------------------
// Gradient attack

namespace {

Eigen::MatrixXd ridge_system(const RowMatrix& factors, const std::vector<Index>& rows,
                             double lambda) {
  const auto d = factors.cols();
  Eigen::MatrixXd a = lambda * Eigen::MatrixXd::Identity(d, d);
  for (Index r : rows) a.noalias() += factors.row(r).transpose() * factors.row(r);
  return a;
}

/// Bias-free ALS on mean-centred ratings. Users are visited in id order so
/// the result does not depend on how the exposed dataset is indexed.
std::pair<RowMatrix, RowMatrix> train_surrogate(const Dataset& d, double mean,
                                                const TrainConfig& config) {
  config.validate();
  const auto k = static_cast<Eigen::Index>(config.latent_dim);
  std::vector<Index> order(d.n_users());
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return d.user_id(a) < d.user_id(b); });

  Rng rng = make_rng(config.seed, 0x5a6);
  RowMatrix items(static_cast<Eigen::Index>(d.n_items()), k);
  for (Eigen::Index r = 0; r < items.rows(); ++r) {
    for (Eigen::Index c = 0; c < k; ++c) items(r, c) = config.init_scale * standard_normal(rng);
  }
  RowMatrix users = RowMatrix::Zero(static_cast<Eigen::Index>(d.n_users()), k);
  const Eigen::MatrixXd ridge = config.reg_lambda * Eigen::MatrixXd::Identity(k, k);

  for (std::size_t sweep = 0; sweep < config.epochs; ++sweep) {
    for (Index u : order) {
      Eigen::MatrixXd a = ridge;
      Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
      for (const auto& x : d.user_interactions(u)) {
        a.noalias() += items.row(x.item).transpose() * items.row(x.item);
        b += (x.rating - mean) * items.row(x.item).transpose();
      }
      users.row(u) = a.ldlt().solve(b).transpose();
    }
    for (Index i = 0; i < d.n_items(); ++i) {
      Eigen::MatrixXd a = ridge;
      Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
      std::vector<Index> raters(d.item_users(i).begin(), d.item_users(i).end());
      std::sort(raters.begin(), raters.end(),
                [&](Index x, Index y) { return d.user_id(x) < d.user_id(y); });
      for (Index u : raters) {
        a.noalias() += users.row(u).transpose() * users.row(u);
        b += (*d.rating(u, i) - mean) * users.row(u).transpose();
      }
      items.row(i) = a.ldlt().solve(b).transpose();
    }
    if (!users.allFinite() || !items.allFinite()) {
      throw TrainingDiverged("surrogate factors became non-finite", sweep);
    }
  }
  return {std::move(users), std::move(items)};
}

}  // namespace

PgaObjective::PgaObjective(const Dataset& exposed, const AttackBudget& budget,
                           const TrainConfig& surrogate, std::uint64_t seed)
    : budget_(budget), stats_(compute_stats(exposed)), n_items_(exposed.n_items()),
      lambda_(surrogate.reg_lambda) {
  if (budget.target_items.empty()) throw AttackError("gradient attack needs target items");
  check_stats(stats_);
  if (exposed.n_fake_users() > 0) {
    throw AttackError("gradient attack expects exposed real users only");
  }
  budget.validate(n_items_, 0);
  mean_ = stats_.global_mean;

  auto [users, items] = train_surrogate(exposed, mean_, surrogate);
  item_factors_ = std::move(items);
  const auto k = item_factors_.cols();

  // Mean user factor in id order.
  std::vector<Index> order(exposed.n_users());
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return exposed.user_id(a) < exposed.user_id(b); });
  mean_user_factor_ = Eigen::VectorXd::Zero(k);
  for (Index u : order) mean_user_factor_ += users.row(u).transpose();
  mean_user_factor_ /= static_cast<double>(std::max<std::size_t>(exposed.n_users(), 1));

  for (Index t : budget.target_items) {
    std::vector<Index> raters(exposed.item_users(t).begin(), exposed.item_users(t).end());
    std::sort(raters.begin(), raters.end(),
              [&](Index x, Index y) { return exposed.user_id(x) < exposed.user_id(y); });
    Eigen::MatrixXd a = lambda_ * Eigen::MatrixXd::Identity(k, k);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
    for (Index u : raters) {
      a.noalias() += users.row(u).transpose() * users.row(u);
      b += (*exposed.rating(u, t) - mean_) * users.row(u).transpose();
    }
    target_gram_.push_back(std::move(a));
    target_rhs_.push_back(std::move(b));
  }

  is_target_.assign(n_items_, false);
  for (Index t : budget.target_items) is_target_[t] = true;
  std::vector<Index> candidates;
  for (Index i = 0; i < n_items_; ++i) {
    if (!is_target_[i]) candidates.push_back(i);
  }

  // Average-attack initialisation on a 2x filler superset.
  Rng rng = make_rng(seed, 0x96a);
  const auto n_fake = static_cast<Eigen::Index>(budget.n_fake_users);
  initial_ = RowMatrix::Zero(n_fake, static_cast<Eigen::Index>(n_items_));
  support_.resize(budget.n_fake_users);
  for (std::size_t f = 0; f < budget.n_fake_users; ++f) {
    auto fillers = sample_without_replacement(candidates, 2 * budget.filler_size, rng);
    std::sort(fillers.begin(), fillers.end());
    for (Index i : fillers) {
      initial_(static_cast<Eigen::Index>(f), i) =
          draw_filler_rating(stats_, budget_, FillerRating::kItem, i, rng);
    }
    std::vector<Index> row = fillers;
    for (Index t : budget.target_items) {
      initial_(static_cast<Eigen::Index>(f), t) = budget.rating_max;
      row.push_back(t);
    }
    std::sort(row.begin(), row.end());
    support_[f] = std::move(row);
  }
}

PgaObjective::InnerState PgaObjective::inner(const RowMatrix& x) const {
  const auto k = item_factors_.cols();
  InnerState state;
  state.fake_factors.resize(static_cast<Eigen::Index>(support_.size()), k);
  for (std::size_t f = 0; f < support_.size(); ++f) {
    const Eigen::MatrixXd a = ridge_system(item_factors_, support_[f], lambda_);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
    for (Index i : support_[f]) {
      b += (x(static_cast<Eigen::Index>(f), i) - mean_) * item_factors_.row(i).transpose();
    }
    state.fake_factors.row(static_cast<Eigen::Index>(f)) = a.ldlt().solve(b).transpose();
  }
  for (std::size_t n = 0; n < budget_.target_items.size(); ++n) {
    const Index t = budget_.target_items[n];
    Eigen::MatrixXd a = target_gram_[n];
    Eigen::VectorXd b = target_rhs_[n];
    for (Eigen::Index f = 0; f < state.fake_factors.rows(); ++f) {
      a.noalias() += state.fake_factors.row(f).transpose() * state.fake_factors.row(f);
      b += (x(f, t) - mean_) * state.fake_factors.row(f).transpose();
    }
    state.target_factors.push_back(a.ldlt().solve(b));
    state.target_systems.push_back(std::move(a));
  }
  return state;
}

double PgaObjective::loss(const RowMatrix& x) const {
  const InnerState s = inner(x);
  double total = 0.0;
  for (const auto& q : s.target_factors) total -= mean_ + mean_user_factor_.dot(q);
  return total;
}

RowMatrix PgaObjective::gradient(const RowMatrix& x) const {
  const InnerState s = inner(x);
  const auto k = item_factors_.cols();
  const Eigen::VectorXd c = -mean_user_factor_;
  RowMatrix grad = RowMatrix::Zero(x.rows(), x.cols());

  std::vector<Eigen::VectorXd> w;
  for (const auto& a : s.target_systems) w.push_back(a.ldlt().solve(c));

  for (std::size_t f = 0; f < support_.size(); ++f) {
    const auto row = static_cast<Eigen::Index>(f);
    const Eigen::VectorXd p = s.fake_factors.row(row).transpose();
    Eigen::VectorXd dp = Eigen::VectorXd::Zero(k);
    for (std::size_t n = 0; n < budget_.target_items.size(); ++n) {
      const Index t = budget_.target_items[n];
      const Eigen::VectorXd& q = s.target_factors[n];
      dp += (x(row, t) - mean_) * w[n] - w[n] * p.dot(q) - q * w[n].dot(p);
      grad(row, t) += w[n].dot(p);
    }
    const Eigen::MatrixXd a = ridge_system(item_factors_, support_[f], lambda_);
    const Eigen::VectorXd v = a.ldlt().solve(dp);
    for (Index i : support_[f]) grad(row, i) += item_factors_.row(i).dot(v);
  }
  return grad;
}

RowMatrix PgaObjective::finite_difference_gradient(const RowMatrix& x, double h) const {
  RowMatrix grad = RowMatrix::Zero(x.rows(), x.cols());
  RowMatrix probe = x;
  for (std::size_t f = 0; f < support_.size(); ++f) {
    const auto row = static_cast<Eigen::Index>(f);
    for (Index i : support_[f]) {
      const double saved = probe(row, i);
      probe(row, i) = saved + h;
      const double up = loss(probe);
      probe(row, i) = saved - h;
      const double down = loss(probe);
      probe(row, i) = saved;
      grad(row, i) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

RowMatrix PgaObjective::project(RowMatrix x) const {
  for (std::size_t f = 0; f < support_.size(); ++f) {
    const auto row = static_cast<Eigen::Index>(f);
    for (Index i : support_[f]) {
      x(row, i) = is_target_[i] ? budget_.rating_max
                                : std::clamp(x(row, i), budget_.rating_min, budget_.rating_max);
    }
  }
  return x;
}

FakeProfiles PgaObjective::discretize(const RowMatrix& x) const {
  FakeProfiles out;
  for (std::size_t f = 0; f < support_.size(); ++f) {
    const auto row = static_cast<Eigen::Index>(f);
    std::vector<Index> fillers;
    for (Index i : support_[f]) {
      if (!is_target_[i]) fillers.push_back(i);
    }
    auto deviation = [&](Index i) { return std::abs(x(row, i) - stats_.item_mean[i]); };
    std::stable_sort(fillers.begin(), fillers.end(),
                     [&](Index a, Index b) { return deviation(a) > deviation(b); });
    if (fillers.size() > budget_.filler_size) fillers.resize(budget_.filler_size);

    FakeProfile profile;
    profile.user_id = fake_user_id(budget_.first_fake_ordinal + f);
    for (Index t : budget_.target_items) profile.ratings.emplace_back(t, budget_.rating_max);
    for (Index i : fillers) {
      profile.ratings.emplace_back(
          i, round_rating(x(row, i), budget_.rating_min, budget_.rating_max, budget_.rating_step));
    }
    std::sort(profile.ratings.begin(), profile.ratings.end());
    out.profiles.push_back(std::move(profile));
  }
  return out;
}

FakeProfiles pga_attack(const Dataset& exposed, const AttackBudget& budget,
                        const TrainConfig& surrogate, const PgaOptions& options) {
  if (budget.target_items.empty()) throw AttackError("gradient attack needs target items");
  if (exposed.empty()) throw AttackError("attacker received an empty exposed dataset");
  if (budget.n_fake_users == 0) return {};
  const PgaObjective objective(exposed, budget, surrogate, options.seed);
  RowMatrix x = objective.initial();
  for (std::size_t iter = 0; iter < options.outer_iters; ++iter) {
    x = objective.project(x - options.step_size * objective.gradient(x));
  }
  return objective.discretize(x);
}

}  // namespace shillbench
