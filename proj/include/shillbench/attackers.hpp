#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "shillbench/dataset.hpp"
#include "shillbench/mf_model.hpp"

namespace shillbench {

class AttackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AttackBudget {
  std::size_t n_fake_users = 0;
  std::size_t filler_size = 0;
  std::size_t selected_size = 0;
  std::vector<Index> target_items;
  double rating_min = 1.0;
  double rating_max = 5.0;
  /// Spacing of valid ratings; generated ratings are rounded onto
  /// rating_min + k * rating_step.
  double rating_step = 1.0;
  /// Fake ids are fake:<first_fake_ordinal + n>.
  std::size_t first_fake_ordinal = 0;

  /// Throws AttackError unless the budget fits a catalog of `n_items`.
  void validate(std::size_t n_items, std::size_t selected_used) const;
};

void to_json(nlohmann::json& j, const AttackBudget& b);

/// Rating statistics an attacker may learn from its exposed data.
struct DatasetStats {
  std::size_t n_items = 0;
  std::size_t n_ratings = 0;
  double global_mean = 0.0;
  double global_std = 0.0;
  std::vector<double> item_mean;
  std::vector<double> item_std;
  std::vector<std::size_t> item_degree;
  /// Items by descending degree, ties by ascending index.
  std::vector<Index> popularity;
};

/// Order-independent: equal interaction sets give bit-identical statistics.
DatasetStats compute_stats(const Dataset& exposed);

/// Nearest point of rating_min + k*step (halves away from zero), clipped.
double round_rating(double value, double rating_min, double rating_max, double step);

FakeProfiles random_attack(const DatasetStats& stats, const AttackBudget& budget,
                           std::uint64_t seed);
FakeProfiles average_attack(const DatasetStats& stats, const AttackBudget& budget,
                            std::uint64_t seed);
FakeProfiles bandwagon_attack(const DatasetStats& stats, const AttackBudget& budget,
                              std::uint64_t seed);
FakeProfiles segment_attack(const DatasetStats& stats, const AttackBudget& budget,
                            const std::vector<Index>& segment, std::uint64_t seed);

/// The `size` items most often co-rated with `target` (ties by ascending
/// index). Items never co-rated are not included.
std::vector<Index> co_rating_segment(const Dataset& exposed, Index target,
                                     std::size_t size);

struct PgaOptions {
  std::size_t outer_iters = 10;
  double step_size = 10.0;
  std::uint64_t seed = 0;
};

/// Projected-gradient poisoning against a bias-free ALS surrogate.
///
/// Holds the surrogate trained on the exposed data, the support of the fake
/// rating matrix X and the inner map: one ALS round that solves the fake user
/// factors from X and then re-solves the target item factors from all users.
/// The adversarial loss is minus the mean predicted target score over the
/// exposed real users.
class PgaObjective {
 public:
  PgaObjective(const Dataset& exposed, const AttackBudget& budget,
               const TrainConfig& surrogate, std::uint64_t seed);

  std::size_t n_fake() const { return support_.size(); }
  std::size_t n_items() const { return n_items_; }
  /// Support of row f: filler candidates followed by the targets, ascending.
  const std::vector<std::vector<Index>>& support() const { return support_; }
  const RowMatrix& initial() const { return initial_; }
  const std::vector<bool>& is_target() const { return is_target_; }
  const DatasetStats& stats() const { return stats_; }

  double loss(const RowMatrix& x) const;
  /// Analytic gradient through both ridge solves; zero off the support.
  RowMatrix gradient(const RowMatrix& x) const;
  /// Central differences over the support with step `h`.
  RowMatrix finite_difference_gradient(const RowMatrix& x, double h) const;

  /// One projected step: clip to the rating range and re-pin targets.
  RowMatrix project(RowMatrix x) const;
  FakeProfiles discretize(const RowMatrix& x) const;

 private:
  struct InnerState {
    RowMatrix fake_factors;                    // n_fake x d
    std::vector<Eigen::VectorXd> target_factors;
    std::vector<Eigen::MatrixXd> target_systems;
  };
  InnerState inner(const RowMatrix& x) const;

  AttackBudget budget_;
  DatasetStats stats_;
  std::size_t n_items_ = 0;
  double lambda_ = 0.0;
  double mean_ = 0.0;
  RowMatrix item_factors_;
  Eigen::VectorXd mean_user_factor_;
  std::vector<Eigen::MatrixXd> target_gram_;   // real-user part of A_t
  std::vector<Eigen::VectorXd> target_rhs_;    // real-user part of b_t
  std::vector<std::vector<Index>> support_;
  std::vector<bool> is_target_;
  RowMatrix initial_;
};

FakeProfiles pga_attack(const Dataset& exposed, const AttackBudget& budget,
                        const TrainConfig& surrogate, const PgaOptions& options);

}  // namespace shillbench
