#include "shillbench/detectors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>

#include "shillbench/random.hpp"

namespace shillbench {

namespace {

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

DetectionResult blank_result(const Dataset& d, std::string name) {
  DetectionResult r;
  r.detector = std::move(name);
  r.users.reserve(d.n_users());
  for (Index u = 0; u < d.n_users(); ++u) r.users.push_back({d.user_id(u), 0.0, false});
  return r;
}

void require_both_classes(const Dataset& labeled) {
  const std::size_t fakes = labeled.n_fake_users();
  if (fakes == 0 || fakes == labeled.n_users()) {
    throw DetectorError("labeled training data must contain both real and fake users");
  }
}

}  // namespace

std::vector<std::string> DetectionResult::flagged() const {
  std::vector<std::string> ids;
  for (const auto& v : users) {
    if (v.fake) ids.push_back(v.user_id);
  }
  return ids;
}

void label_top_m(DetectionResult& r, std::size_t m) {
  if (m > r.users.size()) {
    throw DetectorError("cannot flag " + std::to_string(m) + " of " +
                        std::to_string(r.users.size()) + " users");
  }
  std::vector<std::size_t> order(r.users.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return r.users[a].score > r.users[b].score;
  });
  for (auto& v : r.users) v.fake = false;
  for (std::size_t n = 0; n < m; ++n) r.users[order[n]].fake = true;
}

void label_threshold(DetectionResult& r, double threshold) {
  for (auto& v : r.users) v.fake = v.score > threshold;
}

void write_detection_csv(const DetectionResult& r, const Dataset& d,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DetectorError(path.string() + ": cannot write");
  out << "user_id,score,label,provenance_truth\n";
  char buf[64];
  for (const auto& v : r.users) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v.score);
    out << v.user_id << ',' << std::string(buf, ptr) << ',' << (v.fake ? "fake" : "real");
    out << ',';
    if (auto u = d.find_user(v.user_id)) out << to_string(d.provenance(*u));
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Features

std::vector<UserFeatureVector> extract_features(const Dataset& d, const Dataset* degree_source) {
  std::vector<double> degree(d.n_items(), 0.0);
  for (Index i = 0; i < d.n_items(); ++i) {
    if (!degree_source) {
      degree[i] = static_cast<double>(d.item_degree(i));
    } else if (auto j = degree_source->find_item(d.item_id(i))) {
      degree[i] = static_cast<double>(degree_source->item_degree(*j));
    }
  }

  std::vector<Index> by_degree(d.n_items());
  std::iota(by_degree.begin(), by_degree.end(), Index{0});
  std::stable_sort(by_degree.begin(), by_degree.end(),
                   [&](Index a, Index b) { return degree[a] > degree[b]; });
  const auto n_popular = static_cast<std::size_t>(
      std::ceil(0.1 * static_cast<double>(d.n_items())));
  std::vector<bool> popular(d.n_items(), false);
  for (std::size_t n = 0; n < n_popular; ++n) popular[by_degree[n]] = true;

  std::vector<UserFeatureVector> out(d.n_users());
  for (Index u = 0; u < d.n_users(); ++u) {
    const auto row = d.user_interactions(u);
    if (row.empty()) continue;
    const auto len = static_cast<double>(row.size());
    double deg_sum = 0.0;
    double rating_sum = 0.0;
    double pop = 0.0;
    for (const auto& x : row) {
      deg_sum += degree[x.item];
      rating_sum += x.rating;
      if (popular[x.item]) pop += 1.0;
    }
    UserFeatureVector& f = out[u];
    f.profile_length = len;
    f.mean_item_degree = deg_sum / len;
    f.mean_rating = rating_sum / len;
    f.popular_ratio = pop / len;
    double deg_ss = 0.0;
    double rating_ss = 0.0;
    for (const auto& x : row) {
      deg_ss += (degree[x.item] - f.mean_item_degree) * (degree[x.item] - f.mean_item_degree);
      rating_ss += (x.rating - f.mean_rating) * (x.rating - f.mean_rating);
    }
    f.std_item_degree = std::sqrt(deg_ss / len);
    f.std_rating = std::sqrt(rating_ss / len);
  }
  return out;
}

// ---------------------------------------------------------------------------
// DegreeSAD

double LogisticFit::predict(const UserFeatureVector& x) const {
  const auto v = x.values();
  double z = weights[UserFeatureVector::kSize];
  for (std::size_t f = 0; f < UserFeatureVector::kSize; ++f) {
    z += weights[static_cast<Eigen::Index>(f)] * (v[f] - feature_mean[f]) / feature_scale[f];
  }
  return sigmoid(z);
}

LogisticFit fit_degree_sad(const Dataset& labeled, const DegreeSadOptions& options,
                           const Dataset* degree_source) {
  require_both_classes(labeled);
  const auto features = extract_features(labeled, degree_source);
  constexpr std::size_t kF = UserFeatureVector::kSize;
  const auto n = static_cast<Eigen::Index>(features.size());

  LogisticFit fit;
  for (std::size_t f = 0; f < kF; ++f) {
    double sum = 0.0;
    for (const auto& x : features) sum += x.values()[f];
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& x : features) ss += (x.values()[f] - mean) * (x.values()[f] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    fit.feature_mean[f] = mean;
    fit.feature_scale[f] = sd > 0.0 ? sd : 1.0;
  }

  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(kF + 1));
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto v = features[static_cast<std::size_t>(r)].values();
    for (std::size_t f = 0; f < kF; ++f) {
      x(r, static_cast<Eigen::Index>(f)) = (v[f] - fit.feature_mean[f]) / fit.feature_scale[f];
    }
    x(r, static_cast<Eigen::Index>(kF)) = 1.0;
    y[r] = labeled.provenance(static_cast<Index>(r)) == Provenance::kFake ? 1.0 : 0.0;
  }

  fit.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(kF + 1));
  auto cross_entropy = [&](const Eigen::VectorXd& z) {
    double loss = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      // log(1 + e^z) - y z
      const double s = z[r];
      loss += (s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s))) - y[r] * s;
    }
    return loss / static_cast<double>(n);
  };
  for (std::size_t it = 0; it <= options.iterations; ++it) {
    const Eigen::VectorXd z = x * fit.weights;
    fit.loss_history.push_back(cross_entropy(z));
    if (it == options.iterations) break;
    Eigen::VectorXd p(n);
    for (Eigen::Index r = 0; r < n; ++r) p[r] = sigmoid(z[r]);
    fit.weights -= options.learning_rate * (x.transpose() * (p - y)) / static_cast<double>(n);
  }
  return fit;
}

DetectionResult degree_sad(const Dataset& labeled, const Dataset& apply_to,
                           const DegreeSadOptions& options) {
  const LogisticFit fit = fit_degree_sad(labeled, options, &apply_to);
  const auto features = extract_features(apply_to);
  DetectionResult r = blank_result(apply_to, "degree_sad");
  for (std::size_t u = 0; u < features.size(); ++u) r.users[u].score = fit.predict(features[u]);
  label_threshold(r, options.threshold);
  return r;
}

// ---------------------------------------------------------------------------
// SemiSAD

BinnedNaiveBayes::BinnedNaiveBayes(std::vector<std::vector<double>> edges, std::size_t bins)
    : edges_(std::move(edges)), bins_(bins) {
  if (bins_ < 1) throw DetectorError("naive Bayes needs at least one bin");
  if (edges_.size() != UserFeatureVector::kSize) {
    throw DetectorError("naive Bayes needs bin edges for every feature");
  }
  log_likelihood_.assign(2 * UserFeatureVector::kSize * bins_, std::log(1.0 / static_cast<double>(bins_)));
  log_prior_[0] = log_prior_[1] = std::log(0.5);
}

BinnedNaiveBayes BinnedNaiveBayes::from_quantiles(const std::vector<UserFeatureVector>& x,
                                                  std::size_t bins) {
  if (x.empty()) throw DetectorError("cannot bin an empty feature set");
  std::vector<std::vector<double>> edges(UserFeatureVector::kSize);
  for (std::size_t f = 0; f < UserFeatureVector::kSize; ++f) {
    std::vector<double> v;
    v.reserve(x.size());
    for (const auto& row : x) v.push_back(row.values()[f]);
    std::sort(v.begin(), v.end());
    for (std::size_t b = 1; b < bins; ++b) {
      // Linear interpolation between order statistics.
      const double pos = static_cast<double>(b) / static_cast<double>(bins) *
                         static_cast<double>(v.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const std::size_t hi = std::min(lo + 1, v.size() - 1);
      const double frac = pos - static_cast<double>(lo);
      edges[f].push_back(v[lo] + frac * (v[hi] - v[lo]));
    }
  }
  return BinnedNaiveBayes(std::move(edges), bins);
}

std::size_t BinnedNaiveBayes::bin_of(std::size_t feature, double v) const {
  const auto& e = edges_[feature];
  return static_cast<std::size_t>(std::upper_bound(e.begin(), e.end(), v) - e.begin());
}

void BinnedNaiveBayes::fit(const std::vector<UserFeatureVector>& x,
                           const std::vector<bool>& fake, const std::vector<double>& weight) {
  constexpr std::size_t kF = UserFeatureVector::kSize;
  double class_weight[2] = {0.0, 0.0};
  std::vector<double> counts(2 * kF * bins_, 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const std::size_t c = fake[n] ? 1 : 0;
    class_weight[c] += weight[n];
    const auto v = x[n].values();
    for (std::size_t f = 0; f < kF; ++f) {
      counts[(c * kF + f) * bins_ + bin_of(f, v[f])] += weight[n];
    }
  }
  const double total = class_weight[0] + class_weight[1];
  for (std::size_t c = 0; c < 2; ++c) {
    log_prior_[c] = std::log((class_weight[c] + 1.0) / (total + 2.0));
    for (std::size_t f = 0; f < kF; ++f) {
      for (std::size_t b = 0; b < bins_; ++b) {
        const std::size_t at = (c * kF + f) * bins_ + b;
        log_likelihood_[at] =
            std::log((counts[at] + 1.0) / (class_weight[c] + static_cast<double>(bins_)));
      }
    }
  }
}

double BinnedNaiveBayes::prior_fake() const { return std::exp(log_prior_[1]); }

double BinnedNaiveBayes::posterior_fake(const UserFeatureVector& x) const {
  constexpr std::size_t kF = UserFeatureVector::kSize;
  const auto v = x.values();
  double log_joint[2] = {log_prior_[0], log_prior_[1]};
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t f = 0; f < kF; ++f) {
      log_joint[c] += log_likelihood_[(c * kF + f) * bins_ + bin_of(f, v[f])];
    }
  }
  return sigmoid(log_joint[1] - log_joint[0]);
}

DetectionResult semi_sad(const Dataset& labeled, const Dataset& unlabeled,
                         const SemiSadOptions& options) {
  require_both_classes(labeled);
  if (!(options.pseudo_weight >= 0.0)) throw DetectorError("pseudo_weight must be nonnegative");
  const auto labeled_x = extract_features(labeled, &unlabeled);
  const auto unlabeled_x = extract_features(unlabeled);
  std::vector<bool> labeled_y(labeled.n_users());
  for (Index u = 0; u < labeled.n_users(); ++u) {
    labeled_y[u] = labeled.provenance(u) == Provenance::kFake;
  }

  BinnedNaiveBayes model = BinnedNaiveBayes::from_quantiles(labeled_x, options.bins);
  model.fit(labeled_x, labeled_y, std::vector<double>(labeled_x.size(), 1.0));

  for (std::size_t round = 0; round < options.rounds; ++round) {
    std::vector<UserFeatureVector> x = labeled_x;
    std::vector<bool> y = labeled_y;
    std::vector<double> w(labeled_x.size(), 1.0);
    for (std::size_t u = 0; u < unlabeled_x.size(); ++u) {
      const double p = model.posterior_fake(unlabeled_x[u]);
      const double confidence = std::max(p, 1.0 - p);
      if (confidence >= options.conf_threshold) {
        x.push_back(unlabeled_x[u]);
        y.push_back(p >= 0.5);
        w.push_back(options.pseudo_weight);
      }
    }
    model.fit(x, y, w);
  }

  DetectionResult r = blank_result(unlabeled, "semi_sad");
  for (std::size_t u = 0; u < unlabeled_x.size(); ++u) {
    r.users[u].score = model.posterior_fake(unlabeled_x[u]);
  }
  label_threshold(r, 0.5);
  return r;
}

// ---------------------------------------------------------------------------
// PCASelectUser

Eigen::SparseMatrix<double, Eigen::RowMajor> zscore_matrix(const Dataset& d) {
  std::vector<double> mean(d.n_items(), 0.0);
  std::vector<double> sd(d.n_items(), 0.0);
  for (Index i = 0; i < d.n_items(); ++i) {
    const auto raters = d.item_users(i);
    if (raters.size() < 2) continue;
    double sum = 0.0;
    for (Index u : raters) sum += *d.rating(u, i);
    mean[i] = sum / static_cast<double>(raters.size());
    double ss = 0.0;
    for (Index u : raters) ss += (*d.rating(u, i) - mean[i]) * (*d.rating(u, i) - mean[i]);
    sd[i] = std::sqrt(ss / static_cast<double>(raters.size()));
  }
  std::vector<Eigen::Triplet<double>> entries;
  for (const auto& x : d.interactions()) {
    if (sd[x.item] > 0.0) {
      entries.emplace_back(static_cast<int>(x.user), static_cast<int>(x.item),
                           (x.rating - mean[x.item]) / sd[x.item]);
    }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> z(static_cast<Eigen::Index>(d.n_users()),
                                                 static_cast<Eigen::Index>(d.n_items()));
  z.setFromTriplets(entries.begin(), entries.end());
  return z;
}

PrincipalComponents top_components(const Eigen::SparseMatrix<double, Eigen::RowMajor>& z,
                                   std::size_t n_components, std::uint64_t seed,
                                   std::size_t max_iters, double rel_tol) {
  PrincipalComponents pc;
  const Eigen::Index dim = z.cols();
  Rng rng = make_rng(seed, 0x9ca);
  // (Z^T Z - sum lambda v v^T) v without forming the Gram matrix.
  auto apply = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd out = z.transpose() * (z * v);
    for (std::size_t c = 0; c < pc.directions.size(); ++c) {
      out -= pc.eigenvalues[c] * pc.directions[c] * pc.directions[c].dot(v);
    }
    return out;
  };
  for (std::size_t c = 0; c < n_components; ++c) {
    Eigen::VectorXd v(dim);
    for (Eigen::Index n = 0; n < dim; ++n) v[n] = standard_normal(rng);
    v.normalize();
    double lambda = 0.0;
    std::size_t it = 0;
    for (; it < max_iters; ++it) {
      Eigen::VectorXd w = apply(v);
      const double norm = w.norm();
      if (norm == 0.0) {
        lambda = 0.0;
        break;
      }
      v = w / norm;
      const double next = v.dot(apply(v));
      const bool done = it > 0 && std::abs(next - lambda) <= rel_tol * std::abs(next);
      lambda = next;
      if (done) break;
    }
    pc.eigenvalues.push_back(lambda);
    pc.directions.push_back(v);
    pc.iterations.push_back(it);
  }
  return pc;
}

DetectionResult pca_select_users(const Dataset& d, std::size_t n_components,
                                 std::size_t m_flag, std::uint64_t seed) {
  if (n_components < 1) throw DetectorError("n_components must be at least 1");
  if (d.n_users() <= n_components) {
    throw DetectorError("PCA detection needs more users than components");
  }
  if (m_flag > d.n_users()) throw DetectorError("m_flag exceeds the number of users");
  const auto z = zscore_matrix(d);
  const PrincipalComponents pc = top_components(z, n_components, seed);
  Eigen::VectorXd energy = Eigen::VectorXd::Zero(z.rows());
  for (const auto& v : pc.directions) energy += (z * v).array().square().matrix();
  const double peak = energy.size() ? energy.maxCoeff() : 0.0;
  DetectionResult r = blank_result(d, "pca_select_users");
  for (Index u = 0; u < d.n_users(); ++u) {
    r.users[u].score = peak > 0.0 ? 1.0 - energy[u] / peak : 1.0;
  }
  label_top_m(r, m_flag);
  return r;
}

// ---------------------------------------------------------------------------
// FAP

DetectionResult fap_detect(const Dataset& d, const FapOptions& o, FapTrace* trace) {
  if (d.empty()) throw DetectorError("FAP needs a nonempty dataset");
  if (!(o.prior >= 0.0 && o.prior <= 1.0)) throw DetectorError("prior must lie in [0, 1]");
  if (!(o.extreme_weight > 0.0)) throw DetectorError("extreme_weight must be positive");

  // Seeds: largest share of rating_max ratings on below-median-degree items.
  std::vector<std::size_t> degrees;
  for (Index i = 0; i < d.n_items(); ++i) {
    if (d.item_degree(i) > 0) degrees.push_back(d.item_degree(i));
  }
  std::sort(degrees.begin(), degrees.end());
  const std::size_t mid = degrees.size() / 2;
  const double median = degrees.size() % 2 ? static_cast<double>(degrees[mid])
                                           : 0.5 * static_cast<double>(degrees[mid - 1] + degrees[mid]);
  std::vector<double> seed_score(d.n_users(), 0.0);
  for (Index u = 0; u < d.n_users(); ++u) {
    const auto row = d.user_interactions(u);
    if (row.empty()) continue;
    double hits = 0.0;
    for (const auto& x : row) {
      if (x.rating == d.rating_max() && static_cast<double>(d.item_degree(x.item)) < median) {
        hits += 1.0;
      }
    }
    seed_score[u] = hits / static_cast<double>(row.size());
  }
  std::vector<Index> order(d.n_users());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return seed_score[a] > seed_score[b]; });
  std::vector<bool> is_seed(d.n_users(), false);
  std::vector<Index> seeds(order.begin(),
                           order.begin() + static_cast<std::ptrdiff_t>(
                                               std::min(o.seed_count, order.size())));
  for (Index s : seeds) is_seed[s] = true;

  auto weight = [&](double rating) {
    return rating == d.rating_max() || rating == d.rating_min() ? 1.0 : o.extreme_weight;
  };

  std::vector<double> user_score(d.n_users(), o.prior);
  for (Index s : seeds) user_score[s] = 1.0;
  std::vector<double> item_score(d.n_items(), o.prior);
  FapTrace local;
  local.seeds = seeds;
  auto observe = [&](const std::vector<double>& s) {
    for (double v : s) {
      local.min_score = std::min(local.min_score, v);
      local.max_score = std::max(local.max_score, v);
    }
  };
  observe(user_score);

  for (std::size_t it = 0; it < o.max_iters; ++it) {
    for (Index i = 0; i < d.n_items(); ++i) {
      const auto raters = d.item_users(i);
      if (raters.empty()) continue;
      double num = 0.0;
      double den = 0.0;
      for (Index u : raters) {
        const double w = weight(*d.rating(u, i));
        num += w * user_score[u];
        den += w;
      }
      item_score[i] = num / den;
    }
    double change = 0.0;
    std::vector<double> next = user_score;
    for (Index u = 0; u < d.n_users(); ++u) {
      if (is_seed[u]) continue;
      const auto row = d.user_interactions(u);
      if (row.empty()) continue;
      double num = 0.0;
      double den = 0.0;
      for (const auto& x : row) {
        const double w = weight(x.rating);
        num += w * item_score[x.item];
        den += w;
      }
      next[u] = num / den;
      change = std::max(change, std::abs(next[u] - user_score[u]));
    }
    user_score.swap(next);
    observe(user_score);
    local.max_change.push_back(change);
    if (change < o.epsilon) {
      local.converged = true;
      break;
    }
  }

  DetectionResult r = blank_result(d, "fap");
  for (Index u = 0; u < d.n_users(); ++u) r.users[u].score = user_score[u];
  if (o.expected_fakes) {
    label_top_m(r, std::min(*o.expected_fakes, d.n_users()));
  } else {
    label_threshold(r, 0.5);
  }
  if (trace) *trace = std::move(local);
  return r;
}

// ---------------------------------------------------------------------------
// generate_filter

namespace {

using DetectorRunner = std::function<DetectionResult(const DetectorSpec&, const nlohmann::json&,
                                                     const Dataset&)>;

struct DetectorEntry {
  nlohmann::json defaults;
  DetectorRunner run;
};

const Dataset& require_labeled(const DetectorSpec& spec) {
  if (!spec.labeled) {
    throw DetectorError("detector '" + spec.name + "' requires labeled calibration data");
  }
  return *spec.labeled;
}

const std::map<std::string, DetectorEntry>& detector_table() {
  static const std::map<std::string, DetectorEntry> table = {
      {"degree_sad",
       {{{"iterations", 500}, {"learning_rate", 0.1}, {"threshold", 0.5}},
        [](const DetectorSpec& spec, const nlohmann::json& p, const Dataset& d) {
          DegreeSadOptions o;
          o.iterations = p.at("iterations").get<std::size_t>();
          o.learning_rate = p.at("learning_rate").get<double>();
          o.threshold = p.at("threshold").get<double>();
          return degree_sad(require_labeled(spec), d, o);
        }}},
      {"semi_sad",
       {{{"conf_threshold", 0.8}, {"rounds", 10}, {"pseudo_weight", 0.5}, {"bins", 10}},
        [](const DetectorSpec& spec, const nlohmann::json& p, const Dataset& d) {
          SemiSadOptions o;
          o.conf_threshold = p.at("conf_threshold").get<double>();
          o.rounds = p.at("rounds").get<std::size_t>();
          o.pseudo_weight = p.at("pseudo_weight").get<double>();
          o.bins = p.at("bins").get<std::size_t>();
          return semi_sad(require_labeled(spec), d, o);
        }}},
      {"pca_select_users",
       {{{"n_components", 3}, {"m_flag", -1}},
        [](const DetectorSpec& spec, const nlohmann::json& p, const Dataset& d) {
          const auto requested = p.at("m_flag").get<long long>();
          std::size_t m = 0;
          if (requested >= 0) {
            m = static_cast<std::size_t>(requested);
          } else if (spec.expected_fakes) {
            m = *spec.expected_fakes;
          } else {
            m = static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(d.n_users())));
          }
          return pca_select_users(d, p.at("n_components").get<std::size_t>(), m, spec.seed);
        }}},
      {"fap",
       {{{"prior", 0.1},
         {"extreme_weight", 0.5},
         {"seed_count", 1},
         {"max_iters", 100},
         {"epsilon", 1e-6}},
        [](const DetectorSpec& spec, const nlohmann::json& p, const Dataset& d) {
          FapOptions o;
          o.prior = p.at("prior").get<double>();
          o.extreme_weight = p.at("extreme_weight").get<double>();
          o.seed_count = p.at("seed_count").get<std::size_t>();
          o.max_iters = p.at("max_iters").get<std::size_t>();
          o.epsilon = p.at("epsilon").get<double>();
          o.expected_fakes = spec.expected_fakes;
          return fap_detect(d, o);
        }}},
  };
  return table;
}

}  // namespace

std::vector<std::string> detector_names() {
  std::vector<std::string> names;
  for (const auto& [name, entry] : detector_table()) names.push_back(name);
  return names;
}

nlohmann::json detector_defaults(const std::string& name) {
  auto it = detector_table().find(name);
  if (it == detector_table().end()) throw DetectorError("unknown detector '" + name + "'");
  return it->second.defaults;
}

FilterOutcome generate_filter(const DetectorSpec& spec, const Dataset& d) {
  auto it = detector_table().find(spec.name);
  if (it == detector_table().end()) throw DetectorError("unknown detector '" + spec.name + "'");
  nlohmann::json params = it->second.defaults;
  for (const auto& [key, value] : spec.params.items()) {
    if (!params.contains(key)) {
      throw DetectorError("detector '" + spec.name + "' has no parameter '" + key + "'");
    }
    params[key] = value;
  }
  FilterOutcome out;
  try {
    out.result = it->second.run(spec, params, d);
  } catch (const nlohmann::json::exception& e) {
    throw DetectorError("detector '" + spec.name + "': invalid parameter value: " + e.what());
  }
  out.flagged = out.result.flagged();
  out.filtered = filter_data(d, out.flagged);
  return out;
}

}  // namespace shillbench
