#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "shillbench/dataset.hpp"

namespace shillbench {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ModelKind { kExplicit, kPairwise };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

struct TrainConfig {
  std::size_t latent_dim = 16;
  double learning_rate = 0.01;
  double reg_lambda = 0.05;
  std::size_t epochs = 50;
  double init_scale = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loss became non-finite or exceeded the divergence bound.
class TrainingDiverged : public ModelError {
 public:
  TrainingDiverged(const std::string& what, std::size_t epoch)
      : ModelError(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

inline constexpr double kDivergenceBound = 1e6;

/// Biased matrix factorization.
///
/// Explicit:  r(u,i) = mu + b_u + b_i + p_u . q_i
/// Pairwise:  s(u,i) = p_u . q_i + b_i, trained with the logistic pairwise loss.
struct MFModel {
  RowMatrix user_factors;
  RowMatrix item_factors;
  Eigen::VectorXd user_bias;
  Eigen::VectorXd item_bias;
  double global_mean = 0.0;
  ModelKind kind = ModelKind::kExplicit;
  TrainConfig config;
  /// Epoch counter used to tag divergence errors.
  std::size_t epoch = 0;

  std::size_t n_users() const { return static_cast<std::size_t>(user_factors.rows()); }
  std::size_t n_items() const { return static_cast<std::size_t>(item_factors.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(user_factors.cols()); }

  bool operator==(const MFModel& other) const;
};

MFModel init_model(const TrainConfig& config, std::size_t n_users,
                   std::size_t n_items, ModelKind kind);

/// Mean training rating, used as mu for explicit models.
double mean_rating(const Dataset& d);

/// One SGD pass over the batch. Returns the batch loss evaluated before the
/// update: mean of e^2 + lambda*|theta|^2 (explicit) or
/// mean of -ln sigma(x) + lambda/2*|theta|^2 (pairwise).
double train_step(MFModel& model, const Batch& batch);

double predict_score(const MFModel& model, Index user, Index item);

/// Scores of every item for one user.
Eigen::VectorXd score_all(const MFModel& model, Index user);

/// Top-k items by score, excluding `exclude` (a per-item mask or empty).
/// Ties are broken by ascending item index.
std::vector<Index> rank_topk(const MFModel& model, Index user, std::size_t k,
                             const std::vector<bool>& exclude = {});

/// Held-out evaluation. Explicit models report `rmse`; pairwise models report
/// `hr@k` and `ndcg@k` with training items excluded from the ranking.
std::map<std::string, double> test_step(const MFModel& model, const Dataset& test,
                                        const Dataset& train,
                                        const std::vector<std::size_t>& ks);

// Per-sample objectives and their analytic gradients. The explicit objective
// is 0.5*(e^2 + lambda*|theta|^2); SGD steps follow its negative gradient.

struct ExplicitGradient {
  Eigen::VectorXd user_factor;
  Eigen::VectorXd item_factor;
  double user_bias = 0.0;
  double item_bias = 0.0;
};

double explicit_sample_objective(const MFModel& m, Index u, Index i, double r);
ExplicitGradient explicit_sample_gradient(const MFModel& m, Index u, Index i, double r);

struct PairwiseGradient {
  Eigen::VectorXd user_factor;
  Eigen::VectorXd pos_factor;
  Eigen::VectorXd neg_factor;
  double pos_bias = 0.0;
  double neg_bias = 0.0;
};

double pairwise_sample_objective(const MFModel& m, Index u, Index i, Index j);
PairwiseGradient pairwise_sample_gradient(const MFModel& m, Index u, Index i, Index j);

/// Called after each epoch with (epoch, mean loss); return false to stop.
using EpochCallback = std::function<bool(std::size_t, double)>;

struct FitOptions {
  std::size_t batch_size = 256;
  std::size_t negatives_per_positive = 1;
  EpochCallback on_epoch;
};

/// Runs `model.config.epochs` epochs of train_step. Returns per-epoch losses.
std::vector<double> fit(MFModel& model, const Dataset& train,
                        const FitOptions& options = {});

/// Writes `manifest.json` and `tensors.bin` into `dir`.
void save_checkpoint(const MFModel& model, const std::filesystem::path& dir);
MFModel load_checkpoint(const std::filesystem::path& dir);

nlohmann::json info_describe(const MFModel& model);

}  // namespace shillbench
