#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace shillbench {

using Index = std::uint32_t;

enum class FeedbackKind { kExplicit, kImplicit };
enum class Provenance { kReal, kFake };

std::string to_string(FeedbackKind kind);
std::string to_string(Provenance p);
FeedbackKind parse_feedback_kind(const std::string& s);

/// Raised by every dataset operation that rejects its input.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation would leave no interactions behind.
class DatasetEliminated : public DataError {
 public:
  using DataError::DataError;
};

struct Interaction {
  Index user = 0;
  Index item = 0;
  double rating = 1.0;
  std::optional<std::int64_t> timestamp;
};

/// Fake user ids live under this prefix; real ids may not use it.
inline constexpr std::string_view kFakeIdPrefix = "fake:";
std::string fake_user_id(std::size_t ordinal);
bool is_reserved_fake_id(std::string_view id);

/// Raw record used to build datasets before indexing.
struct Triple {
  std::string user;
  std::string item;
  double rating = 1.0;
  std::optional<std::int64_t> timestamp;
};

/// Immutable interaction table.
///
/// Users and items are mapped to contiguous indices. Interactions are stored
/// sorted by (user, item) with at most one entry per pair. A dataset may carry
/// catalog items or users with no interactions: splits and exposure keep the
/// full vocabulary so indices line up across the derived datasets.
class Dataset {
 public:
  Dataset() = default;

  /// Builds a dataset from already-indexed parts. Validates every invariant.
  Dataset(std::vector<std::string> user_ids, std::vector<std::string> item_ids,
          std::vector<Interaction> interactions,
          std::vector<Provenance> provenance, FeedbackKind kind,
          double rating_min, double rating_max);

  /// Indexes raw triples in first-appearance order. Later duplicates of a
  /// (user, item) pair replace earlier ones.
  static Dataset from_triples(const std::vector<Triple>& triples,
                              FeedbackKind kind,
                              std::optional<std::pair<double, double>> range = {});

  std::size_t n_users() const { return user_ids_.size(); }
  std::size_t n_items() const { return item_ids_.size(); }
  std::size_t n_interactions() const { return interactions_.size(); }
  std::size_t n_fake_users() const;
  bool empty() const { return interactions_.empty(); }

  FeedbackKind feedback_kind() const { return kind_; }
  double rating_min() const { return rating_min_; }
  double rating_max() const { return rating_max_; }

  std::span<const Interaction> interactions() const { return interactions_; }
  /// Interactions of one user, sorted by item index.
  std::span<const Interaction> user_interactions(Index user) const;
  /// Users who rated `item`, ascending.
  std::span<const Index> item_users(Index item) const;
  std::size_t user_degree(Index user) const;
  std::size_t item_degree(Index item) const;
  bool has_interaction(Index user, Index item) const;
  std::optional<double> rating(Index user, Index item) const;

  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }
  const std::string& user_id(Index u) const { return user_ids_.at(u); }
  const std::string& item_id(Index i) const { return item_ids_.at(i); }
  std::optional<Index> find_user(const std::string& id) const;
  std::optional<Index> find_item(const std::string& id) const;

  Provenance provenance(Index u) const { return provenance_.at(u); }
  const std::vector<Provenance>& provenance() const { return provenance_; }

 private:
  void build_indices();

  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  std::unordered_map<std::string, Index> user_lookup_;
  std::unordered_map<std::string, Index> item_lookup_;
  std::vector<Interaction> interactions_;
  std::vector<Provenance> provenance_;
  FeedbackKind kind_ = FeedbackKind::kExplicit;
  double rating_min_ = 1.0;
  double rating_max_ = 5.0;

  std::vector<std::size_t> user_offsets_;
  std::vector<std::size_t> item_offsets_;
  std::vector<Index> item_user_list_;
};

/// (user-id, item-id, rating) set equality, independent of indexing.
bool same_triples(const Dataset& a, const Dataset& b);

// ---------------------------------------------------------------------------
// Loading

/// Maps the logical columns onto header names. A source of the form `#N`
/// selects the N-th column (0-based), which also works without a header.
struct CsvSchema {
  std::string user_col = "user_id";
  std::string item_col = "item_id";
  std::string rating_col = "rating";
  std::string timestamp_col = "timestamp";
  std::string provenance_col = "provenance";
  std::string delimiter = ",";
  bool has_header = true;
  std::optional<std::pair<double, double>> rating_range;

  /// Parses `user_id=userId,item_id=movieId,...`.
  static CsvSchema from_column_map(const std::string& map);
};

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema,
                 FeedbackKind kind);
void write_csv(const Dataset& d, const std::filesystem::path& path);

/// Re-encodes a foreign file into the canonical header layout.
std::size_t convert_csv(const std::filesystem::path& input,
                        const CsvSchema& schema,
                        const std::filesystem::path& output);

// ---------------------------------------------------------------------------
// Preprocessing

Dataset preprocess_kcore(const Dataset& d, std::size_t k);
Dataset binarize(const Dataset& d, double threshold);

enum class SplitStrategy { kRatio, kLeaveOneOut };

struct SplitSpec {
  SplitStrategy strategy = SplitStrategy::kRatio;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

/// Per-user split. Both halves keep the full user and item vocabulary.
TrainTestSplit split(const Dataset& d, const SplitSpec& spec);

// ---------------------------------------------------------------------------
// Batching

enum class BatchMode { kPointwise, kPairwise };

struct BatchSpec {
  BatchMode mode = BatchMode::kPointwise;
  std::size_t batch_size = 256;
  std::size_t negatives_per_positive = 1;
  std::uint64_t shuffle_seed = 0;
};

/// Struct-of-arrays batch. `ratings` is filled in pointwise mode and
/// `negatives` in pairwise mode.
struct Batch {
  std::vector<Index> users;
  std::vector<Index> items;
  std::vector<double> ratings;
  std::vector<Index> negatives;

  std::size_t size() const { return users.size(); }
};

std::vector<Batch> generate_batch(const Dataset& d, const BatchSpec& spec,
                                  std::size_t epoch = 0);

// ---------------------------------------------------------------------------
// Fake data manipulation

struct FakeProfile {
  std::string user_id;
  std::vector<std::pair<Index, double>> ratings;  // (item index, rating)
};

struct FakeProfiles {
  std::vector<FakeProfile> profiles;

  std::size_t size() const { return profiles.size(); }
  std::size_t n_ratings() const;
  std::vector<std::string> user_ids() const;
};

Dataset inject_data(const Dataset& d, const FakeProfiles& fake);
Dataset filter_data(const Dataset& d, const std::vector<std::string>& flagged);

/// Keeps a seeded uniform sample of floor(p * n_users) users with their
/// complete profiles. The item catalog is preserved.
Dataset expose_fraction(const Dataset& d, double p, std::uint64_t seed);

/// Restricts to the given users (by index), preserving the item catalog.
Dataset select_users(const Dataset& d, const std::vector<Index>& users);

/// Writes fake profiles in the dataset CSV layout plus a provenance column.
void write_fake_profiles_csv(const FakeProfiles& fake, const Dataset& catalog,
                             const std::filesystem::path& path);

nlohmann::json info_describe(const Dataset& d);

}  // namespace shillbench
