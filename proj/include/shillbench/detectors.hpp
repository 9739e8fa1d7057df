#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include "shillbench/dataset.hpp"

namespace shillbench {

class DetectorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Degree and rating statistics of one user profile.
struct UserFeatureVector {
  double profile_length = 0.0;
  double mean_item_degree = 0.0;
  double std_item_degree = 0.0;
  /// Fraction of the profile inside the top 10% most-rated items.
  double popular_ratio = 0.0;
  double mean_rating = 0.0;
  double std_rating = 0.0;

  static constexpr std::size_t kSize = 6;
  std::array<double, kSize> values() const {
    return {profile_length, mean_item_degree, std_item_degree,
            popular_ratio,  mean_rating,      std_rating};
  }
};

/// One vector per user, indexed like `d`. Item degrees (and the popular set)
/// come from `degree_source` when given, matched by item id, else from `d`.
/// Detectors pass the screened dataset so labeled and unlabeled profiles are
/// measured on one scale.
std::vector<UserFeatureVector> extract_features(const Dataset& d,
                                                const Dataset* degree_source = nullptr);

struct UserVerdict {
  std::string user_id;
  double score = 0.0;  // suspicion in [0, 1]
  bool fake = false;
};

/// Covers every user of the scored dataset once, in index order.
struct DetectionResult {
  std::string detector;
  std::vector<UserVerdict> users;

  std::vector<std::string> flagged() const;
};

/// Labels the `m` highest scores fake; ties go to the lower user index.
void label_top_m(DetectionResult& r, std::size_t m);
/// Labels fake where score > threshold.
void label_threshold(DetectionResult& r, double threshold);

void write_detection_csv(const DetectionResult& r, const Dataset& d,
                         const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Supervised: degree features + logistic regression

struct DegreeSadOptions {
  std::size_t iterations = 500;
  double learning_rate = 0.1;
  double threshold = 0.5;
};

struct LogisticFit {
  std::array<double, UserFeatureVector::kSize> feature_mean{};
  std::array<double, UserFeatureVector::kSize> feature_scale{};
  Eigen::VectorXd weights;  // kSize features then the intercept
  /// Cross-entropy before each update and after the last one.
  std::vector<double> loss_history;

  double predict(const UserFeatureVector& x) const;
};

LogisticFit fit_degree_sad(const Dataset& labeled, const DegreeSadOptions& options = {},
                           const Dataset* degree_source = nullptr);
DetectionResult degree_sad(const Dataset& labeled, const Dataset& apply_to,
                           const DegreeSadOptions& options = {});

// ---------------------------------------------------------------------------
// Semi-supervised: binned features + naive Bayes self-training

struct SemiSadOptions {
  double conf_threshold = 0.8;
  std::size_t rounds = 10;
  double pseudo_weight = 0.5;
  std::size_t bins = 10;
};

/// Categorical naive Bayes over quantile-binned features, add-one smoothed.
class BinnedNaiveBayes {
 public:
  /// `edges[f]` holds the ascending interior bin edges of feature f.
  BinnedNaiveBayes(std::vector<std::vector<double>> edges, std::size_t bins);

  /// Fits from (features, is_fake, weight) samples.
  void fit(const std::vector<UserFeatureVector>& x, const std::vector<bool>& fake,
           const std::vector<double>& weight);
  double posterior_fake(const UserFeatureVector& x) const;
  double prior_fake() const;

  static BinnedNaiveBayes from_quantiles(const std::vector<UserFeatureVector>& x,
                                         std::size_t bins);

 private:
  std::size_t bin_of(std::size_t feature, double v) const;

  std::vector<std::vector<double>> edges_;
  std::size_t bins_;
  double log_prior_[2] = {0.0, 0.0};
  std::vector<double> log_likelihood_;  // [class][feature][bin]
};

DetectionResult semi_sad(const Dataset& labeled, const Dataset& unlabeled,
                         const SemiSadOptions& options = {});

// ---------------------------------------------------------------------------
// Unsupervised: PCA user selection

/// Item-wise z-scores of observed ratings; missing entries and degenerate
/// items are zero.
Eigen::SparseMatrix<double, Eigen::RowMajor> zscore_matrix(const Dataset& d);

struct PrincipalComponents {
  std::vector<double> eigenvalues;
  std::vector<Eigen::VectorXd> directions;
  std::vector<std::size_t> iterations;
};

/// Top eigenpairs of Z^T Z by power iteration with deflation.
PrincipalComponents top_components(const Eigen::SparseMatrix<double, Eigen::RowMajor>& z,
                                   std::size_t n_components, std::uint64_t seed,
                                   std::size_t max_iters = 1000, double rel_tol = 1e-10);

DetectionResult pca_select_users(const Dataset& d, std::size_t n_components,
                                 std::size_t m_flag, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Unsupervised: bipartite fraud-probability propagation

struct FapOptions {
  double prior = 0.1;
  double extreme_weight = 0.5;
  std::size_t seed_count = 1;
  std::size_t max_iters = 100;
  double epsilon = 1e-6;
  std::optional<std::size_t> expected_fakes;
};

struct FapTrace {
  std::vector<Index> seeds;
  std::vector<double> max_change;  // per iteration
  bool converged = false;
  /// Min and max user score observed across all iterations.
  double min_score = 1.0;
  double max_score = 0.0;
};

DetectionResult fap_detect(const Dataset& d, const FapOptions& options = {},
                           FapTrace* trace = nullptr);

// ---------------------------------------------------------------------------
// Unified entry point

struct DetectorSpec {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
  /// Labeled calibration data for the supervised and semi-supervised detectors.
  const Dataset* labeled = nullptr;
  /// Known attack size; detectors that flag a fixed count use it.
  std::optional<std::size_t> expected_fakes;
  std::uint64_t seed = 0;
};

struct FilterOutcome {
  std::vector<std::string> flagged;
  Dataset filtered;
  DetectionResult result;
};

/// Registered detector names, sorted.
std::vector<std::string> detector_names();
/// Default parameters of a registered detector.
nlohmann::json detector_defaults(const std::string& name);

FilterOutcome generate_filter(const DetectorSpec& spec, const Dataset& d);

}  // namespace shillbench
