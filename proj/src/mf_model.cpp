#include "shillbench/mf_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "shillbench/random.hpp"

namespace shillbench {

std::string to_string(ModelKind kind) {
  return kind == ModelKind::kExplicit ? "explicit" : "pairwise-implicit";
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "explicit") return ModelKind::kExplicit;
  if (s == "pairwise-implicit" || s == "pairwise") return ModelKind::kPairwise;
  throw ModelError("unknown model kind '" + s + "'");
}

void TrainConfig::validate() const {
  if (latent_dim == 0) throw ModelError("latent_dim must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ModelError("learning_rate must be finite and nonnegative");
  }
  if (!(reg_lambda >= 0.0) || !std::isfinite(reg_lambda)) {
    throw ModelError("reg_lambda must be finite and nonnegative");
  }
  if (epochs == 0) throw ModelError("epochs must be positive");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) {
    throw ModelError("init_scale must be finite and nonnegative");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"latent_dim", c.latent_dim},       {"learning_rate", c.learning_rate},
       {"reg_lambda", c.reg_lambda},       {"epochs", c.epochs},
       {"init_scale", c.init_scale},       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.reg_lambda = j.value("reg_lambda", c.reg_lambda);
  c.epochs = j.value("epochs", c.epochs);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.seed = j.value("seed", c.seed);
}

bool MFModel::operator==(const MFModel& o) const {
  return kind == o.kind && global_mean == o.global_mean &&
         user_factors == o.user_factors && item_factors == o.item_factors &&
         user_bias == o.user_bias && item_bias == o.item_bias;
}

MFModel init_model(const TrainConfig& config, std::size_t n_users,
                   std::size_t n_items, ModelKind kind) {
  config.validate();
  if (n_users == 0 || n_items == 0) {
    throw ModelError("model needs at least one user and one item");
  }
  MFModel m;
  m.kind = kind;
  m.config = config;
  const auto d = static_cast<Eigen::Index>(config.latent_dim);
  m.user_factors.resize(static_cast<Eigen::Index>(n_users), d);
  m.item_factors.resize(static_cast<Eigen::Index>(n_items), d);
  Rng rng = make_rng(config.seed, 0x1417);
  for (Eigen::Index r = 0; r < m.user_factors.rows(); ++r) {
    for (Eigen::Index c = 0; c < d; ++c) {
      m.user_factors(r, c) = config.init_scale * standard_normal(rng);
    }
  }
  for (Eigen::Index r = 0; r < m.item_factors.rows(); ++r) {
    for (Eigen::Index c = 0; c < d; ++c) {
      m.item_factors(r, c) = config.init_scale * standard_normal(rng);
    }
  }
  m.user_bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_users));
  m.item_bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_items));
  return m;
}

double mean_rating(const Dataset& d) {
  if (d.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& x : d.interactions()) sum += x.rating;
  return sum / static_cast<double>(d.n_interactions());
}

namespace {

void check_index(const MFModel& m, Index u, Index i) {
  if (u >= m.n_users()) throw ModelError("user index out of range");
  if (i >= m.n_items()) throw ModelError("item index out of range");
}

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// -ln sigma(x) without overflow.
double neg_log_sigmoid(double x) {
  return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

double explicit_residual(const MFModel& m, Index u, Index i, double r) {
  return r - predict_score(m, u, i);
}

double pairwise_margin(const MFModel& m, Index u, Index i, Index j) {
  return m.user_factors.row(u).dot(m.item_factors.row(i) - m.item_factors.row(j)) +
         m.item_bias[i] - m.item_bias[j];
}

double explicit_reg(const MFModel& m, Index u, Index i) {
  return m.user_factors.row(u).squaredNorm() + m.item_factors.row(i).squaredNorm() +
         m.user_bias[u] * m.user_bias[u] + m.item_bias[i] * m.item_bias[i];
}

double pairwise_reg(const MFModel& m, Index u, Index i, Index j) {
  return m.user_factors.row(u).squaredNorm() + m.item_factors.row(i).squaredNorm() +
         m.item_factors.row(j).squaredNorm() + m.item_bias[i] * m.item_bias[i] +
         m.item_bias[j] * m.item_bias[j];
}

}  // namespace

double predict_score(const MFModel& m, Index user, Index item) {
  check_index(m, user, item);
  const double dot = m.user_factors.row(user).dot(m.item_factors.row(item));
  if (m.kind == ModelKind::kExplicit) {
    return m.global_mean + m.user_bias[user] + m.item_bias[item] + dot;
  }
  return dot + m.item_bias[item];
}

Eigen::VectorXd score_all(const MFModel& m, Index user) {
  if (user >= m.n_users()) throw ModelError("user index out of range");
  Eigen::VectorXd s = m.item_factors * m.user_factors.row(user).transpose();
  s += m.item_bias;
  if (m.kind == ModelKind::kExplicit) {
    s.array() += m.global_mean + m.user_bias[user];
  }
  return s;
}

double explicit_sample_objective(const MFModel& m, Index u, Index i, double r) {
  const double e = explicit_residual(m, u, i, r);
  return 0.5 * (e * e + m.config.reg_lambda * explicit_reg(m, u, i));
}

ExplicitGradient explicit_sample_gradient(const MFModel& m, Index u, Index i, double r) {
  const double e = explicit_residual(m, u, i, r);
  const double lambda = m.config.reg_lambda;
  ExplicitGradient g;
  g.user_factor = -e * m.item_factors.row(i).transpose() +
                  lambda * m.user_factors.row(u).transpose();
  g.item_factor = -e * m.user_factors.row(u).transpose() +
                  lambda * m.item_factors.row(i).transpose();
  g.user_bias = -e + lambda * m.user_bias[u];
  g.item_bias = -e + lambda * m.item_bias[i];
  return g;
}

double pairwise_sample_objective(const MFModel& m, Index u, Index i, Index j) {
  check_index(m, u, i);
  check_index(m, u, j);
  return neg_log_sigmoid(pairwise_margin(m, u, i, j)) +
         0.5 * m.config.reg_lambda * pairwise_reg(m, u, i, j);
}

PairwiseGradient pairwise_sample_gradient(const MFModel& m, Index u, Index i, Index j) {
  check_index(m, u, i);
  check_index(m, u, j);
  const double w = sigmoid(-pairwise_margin(m, u, i, j));
  const double lambda = m.config.reg_lambda;
  PairwiseGradient g;
  const Eigen::VectorXd p = m.user_factors.row(u).transpose();
  const Eigen::VectorXd qi = m.item_factors.row(i).transpose();
  const Eigen::VectorXd qj = m.item_factors.row(j).transpose();
  g.user_factor = -w * (qi - qj) + lambda * p;
  g.pos_factor = -w * p + lambda * qi;
  g.neg_factor = w * p + lambda * qj;
  g.pos_bias = -w + lambda * m.item_bias[i];
  g.neg_bias = w + lambda * m.item_bias[j];
  if (i == j) {
    // Degenerate pair: the margin terms cancel.
    g.pos_factor = g.neg_factor = lambda * qi;
    g.pos_bias = g.neg_bias = lambda * m.item_bias[i];
  }
  return g;
}

double train_step(MFModel& m, const Batch& batch) {
  if (batch.size() == 0) return 0.0;
  const bool pairwise = !batch.negatives.empty();
  if (pairwise != (m.kind == ModelKind::kPairwise)) {
    throw ModelError("batch mode does not match the model kind");
  }
  const double lr = m.config.learning_rate;
  const double lambda = m.config.reg_lambda;

  double loss = 0.0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const Index u = batch.users[n];
    const Index i = batch.items[n];
    if (pairwise) {
      const Index j = batch.negatives[n];
      check_index(m, u, j);
      check_index(m, u, i);
      loss += neg_log_sigmoid(pairwise_margin(m, u, i, j)) +
              0.5 * lambda * pairwise_reg(m, u, i, j);
    } else {
      check_index(m, u, i);
      const double e = explicit_residual(m, u, i, batch.ratings[n]);
      loss += e * e + lambda * explicit_reg(m, u, i);
    }
  }
  loss /= static_cast<double>(batch.size());
  if (!std::isfinite(loss) || loss > kDivergenceBound) {
    throw TrainingDiverged("training loss diverged", m.epoch);
  }
  if (lr == 0.0) return loss;

  for (std::size_t n = 0; n < batch.size(); ++n) {
    const Index u = batch.users[n];
    const Index i = batch.items[n];
    if (pairwise) {
      const Index j = batch.negatives[n];
      const PairwiseGradient g = pairwise_sample_gradient(m, u, i, j);
      m.user_factors.row(u) -= lr * g.user_factor.transpose();
      m.item_factors.row(i) -= lr * g.pos_factor.transpose();
      if (j != i) {
        m.item_factors.row(j) -= lr * g.neg_factor.transpose();
        m.item_bias[j] -= lr * g.neg_bias;
      }
      m.item_bias[i] -= lr * g.pos_bias;
      if (!m.user_factors.row(u).allFinite() || !m.item_factors.row(i).allFinite() ||
          !m.item_factors.row(j).allFinite()) {
        throw TrainingDiverged("parameters became non-finite", m.epoch);
      }
    } else {
      const ExplicitGradient g = explicit_sample_gradient(m, u, i, batch.ratings[n]);
      m.user_factors.row(u) -= lr * g.user_factor.transpose();
      m.item_factors.row(i) -= lr * g.item_factor.transpose();
      m.user_bias[u] -= lr * g.user_bias;
      m.item_bias[i] -= lr * g.item_bias;
      if (!m.user_factors.row(u).allFinite() || !m.item_factors.row(i).allFinite() ||
          !std::isfinite(m.user_bias[u]) || !std::isfinite(m.item_bias[i])) {
        throw TrainingDiverged("parameters became non-finite", m.epoch);
      }
    }
  }
  return loss;
}

std::vector<Index> rank_topk(const MFModel& m, Index user, std::size_t k,
                             const std::vector<bool>& exclude) {
  const Eigen::VectorXd scores = score_all(m, user);
  std::vector<Index> candidates;
  candidates.reserve(m.n_items());
  for (Index i = 0; i < m.n_items(); ++i) {
    if (exclude.empty() || !exclude[i]) candidates.push_back(i);
  }
  k = std::min(k, candidates.size());
  auto better = [&](Index a, Index b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), better);
  candidates.resize(k);
  return candidates;
}

std::map<std::string, double> test_step(const MFModel& m, const Dataset& test,
                                        const Dataset& train,
                                        const std::vector<std::size_t>& ks) {
  if (test.empty()) throw ModelError("test_step: empty test set");
  if (test.n_users() != m.n_users() || train.n_users() != m.n_users() ||
      test.n_items() != m.n_items()) {
    throw ModelError("test_step: datasets do not match the model dimensions");
  }
  std::map<std::string, double> out;
  if (m.kind == ModelKind::kExplicit) {
    double se = 0.0;
    for (const auto& x : test.interactions()) {
      const double e = x.rating - predict_score(m, x.user, x.item);
      se += e * e;
    }
    out["rmse"] = std::sqrt(se / static_cast<double>(test.n_interactions()));
    out["n_test"] = static_cast<double>(test.n_interactions());
    return out;
  }

  std::vector<double> hits(ks.size(), 0.0);
  std::vector<double> ndcg(ks.size(), 0.0);
  for (Index u = 0; u < test.n_users(); ++u) {
    const auto positives = test.user_interactions(u);
    if (positives.empty()) continue;
    const Eigen::VectorXd scores = score_all(m, u);
    std::vector<bool> in_train(m.n_items(), false);
    for (const auto& x : train.user_interactions(u)) in_train[x.item] = true;
    for (const auto& x : positives) {
      const Index t = x.item;
      std::size_t rank = 0;
      for (Index j = 0; j < m.n_items(); ++j) {
        if (j == t || in_train[j]) continue;
        if (scores[j] > scores[t] || (scores[j] == scores[t] && j < t)) ++rank;
      }
      for (std::size_t n = 0; n < ks.size(); ++n) {
        if (rank < ks[n]) {
          hits[n] += 1.0;
          ndcg[n] += 1.0 / std::log2(static_cast<double>(rank) + 2.0);
        }
      }
    }
  }
  const auto total = static_cast<double>(test.n_interactions());
  for (std::size_t n = 0; n < ks.size(); ++n) {
    out["hr@" + std::to_string(ks[n])] = hits[n] / total;
    out["ndcg@" + std::to_string(ks[n])] = ndcg[n] / total;
  }
  out["n_test"] = total;
  return out;
}

std::vector<double> fit(MFModel& model, const Dataset& train, const FitOptions& options) {
  BatchSpec spec;
  spec.mode = model.kind == ModelKind::kExplicit ? BatchMode::kPointwise
                                                 : BatchMode::kPairwise;
  spec.batch_size = options.batch_size;
  spec.negatives_per_positive = options.negatives_per_positive;
  spec.shuffle_seed = mix_seed(model.config.seed, 0xf17);
  std::vector<double> losses;
  for (std::size_t epoch = 0; epoch < model.config.epochs; ++epoch) {
    model.epoch = epoch;
    double total = 0.0;
    std::size_t samples = 0;
    for (const Batch& batch : generate_batch(train, spec, epoch)) {
      total += train_step(model, batch) * static_cast<double>(batch.size());
      samples += batch.size();
    }
    const double loss = samples ? total / static_cast<double>(samples) : 0.0;
    losses.push_back(loss);
    if (options.on_epoch && !options.on_epoch(epoch, loss)) break;
  }
  return losses;
}

namespace {

constexpr const char* kCheckpointFormat = "shillbench-mf-v1";

void write_doubles(std::ofstream& out, const double* data, std::size_t n) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint tensors are stored little-endian");
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::ifstream& in, double* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw ModelError("checkpoint tensor file is truncated");
}

}  // namespace

void save_checkpoint(const MFModel& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = {
      {"format", kCheckpointFormat},
      {"kind", to_string(m.kind)},
      {"n_users", m.n_users()},
      {"n_items", m.n_items()},
      {"latent_dim", m.dim()},
      {"global_mean", m.global_mean},
      {"seed", m.config.seed},
      {"config", m.config},
      {"tensors", {"user_factors", "item_factors", "user_bias", "item_bias"}}};
  std::ofstream mf(dir / "manifest.json");
  mf << manifest.dump(2) << '\n';
  std::ofstream tf(dir / "tensors.bin", std::ios::binary);
  write_doubles(tf, m.user_factors.data(), static_cast<std::size_t>(m.user_factors.size()));
  write_doubles(tf, m.item_factors.data(), static_cast<std::size_t>(m.item_factors.size()));
  write_doubles(tf, m.user_bias.data(), static_cast<std::size_t>(m.user_bias.size()));
  write_doubles(tf, m.item_bias.data(), static_cast<std::size_t>(m.item_bias.size()));
  if (!mf || !tf) throw ModelError("failed to write checkpoint to " + dir.string());
}

MFModel load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw ModelError("missing checkpoint manifest in " + dir.string());
  const auto manifest = nlohmann::json::parse(mf);
  if (manifest.at("format") != kCheckpointFormat) {
    throw ModelError("unsupported checkpoint format");
  }
  MFModel m;
  m.kind = parse_model_kind(manifest.at("kind"));
  m.config = manifest.at("config").get<TrainConfig>();
  m.global_mean = manifest.at("global_mean").get<double>();
  const auto users = manifest.at("n_users").get<Eigen::Index>();
  const auto items = manifest.at("n_items").get<Eigen::Index>();
  const auto d = manifest.at("latent_dim").get<Eigen::Index>();
  m.user_factors.resize(users, d);
  m.item_factors.resize(items, d);
  m.user_bias.resize(users);
  m.item_bias.resize(items);
  std::ifstream tf(dir / "tensors.bin", std::ios::binary);
  if (!tf) throw ModelError("missing checkpoint tensors in " + dir.string());
  read_doubles(tf, m.user_factors.data(), static_cast<std::size_t>(m.user_factors.size()));
  read_doubles(tf, m.item_factors.data(), static_cast<std::size_t>(m.item_factors.size()));
  read_doubles(tf, m.user_bias.data(), static_cast<std::size_t>(m.user_bias.size()));
  read_doubles(tf, m.item_bias.data(), static_cast<std::size_t>(m.item_bias.size()));
  if (tf.peek() != std::char_traits<char>::eof()) {
    throw ModelError("checkpoint tensor file has trailing data");
  }
  return m;
}

nlohmann::json info_describe(const MFModel& m) {
  return {{"kind", to_string(m.kind)},
          {"latent_dim", m.dim()},
          {"n_users", m.n_users()},
          {"n_items", m.n_items()},
          {"learning_rate", m.config.learning_rate},
          {"reg_lambda", m.config.reg_lambda},
          {"epochs", m.config.epochs}};
}

}  // namespace shillbench
