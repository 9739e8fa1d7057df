#include "shillbench/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <sstream>
#include <tuple>

#include "shillbench/random.hpp"

namespace shillbench {

std::string to_string(FeedbackKind kind) {
  return kind == FeedbackKind::kExplicit ? "explicit" : "implicit";
}

std::string to_string(Provenance p) {
  return p == Provenance::kReal ? "real" : "fake";
}

FeedbackKind parse_feedback_kind(const std::string& s) {
  if (s == "explicit") return FeedbackKind::kExplicit;
  if (s == "implicit") return FeedbackKind::kImplicit;
  throw DataError("unknown feedback kind '" + s + "'");
}

std::string fake_user_id(std::size_t ordinal) {
  return std::string(kFakeIdPrefix) + std::to_string(ordinal);
}

bool is_reserved_fake_id(std::string_view id) {
  return id.substr(0, kFakeIdPrefix.size()) == kFakeIdPrefix;
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(std::vector<std::string> user_ids,
                 std::vector<std::string> item_ids,
                 std::vector<Interaction> interactions,
                 std::vector<Provenance> provenance, FeedbackKind kind,
                 double rating_min, double rating_max)
    : user_ids_(std::move(user_ids)),
      item_ids_(std::move(item_ids)),
      interactions_(std::move(interactions)),
      provenance_(std::move(provenance)),
      kind_(kind),
      rating_min_(rating_min),
      rating_max_(rating_max) {
  if (provenance_.size() != user_ids_.size()) {
    throw DataError("provenance labels do not cover every user");
  }
  if (!(rating_min_ <= rating_max_) || !std::isfinite(rating_min_) ||
      !std::isfinite(rating_max_)) {
    throw DataError("invalid rating range");
  }
  for (std::size_t u = 0; u < user_ids_.size(); ++u) {
    const bool reserved = is_reserved_fake_id(user_ids_[u]);
    if (reserved != (provenance_[u] == Provenance::kFake)) {
      throw DataError("user '" + user_ids_[u] +
                      "' violates the fake-id namespace");
    }
  }
  for (const auto& x : interactions_) {
    if (x.user >= user_ids_.size() || x.item >= item_ids_.size()) {
      throw DataError("interaction index out of range");
    }
    if (kind_ == FeedbackKind::kImplicit) {
      if (x.rating != 1.0) throw DataError("implicit rating must be 1.0");
    } else if (!(x.rating >= rating_min_ && x.rating <= rating_max_)) {
      throw DataError("rating " + std::to_string(x.rating) +
                      " outside the dataset rating range");
    }
  }
  std::sort(interactions_.begin(), interactions_.end(),
            [](const Interaction& a, const Interaction& b) {
              return std::tie(a.user, a.item) < std::tie(b.user, b.item);
            });
  for (std::size_t n = 1; n < interactions_.size(); ++n) {
    if (interactions_[n].user == interactions_[n - 1].user &&
        interactions_[n].item == interactions_[n - 1].item) {
      throw DataError("duplicate (user, item) interaction");
    }
  }
  build_indices();
}

void Dataset::build_indices() {
  user_lookup_.clear();
  item_lookup_.clear();
  user_lookup_.reserve(user_ids_.size());
  item_lookup_.reserve(item_ids_.size());
  for (Index u = 0; u < user_ids_.size(); ++u) {
    if (!user_lookup_.emplace(user_ids_[u], u).second) {
      throw DataError("duplicate user id '" + user_ids_[u] + "'");
    }
  }
  for (Index i = 0; i < item_ids_.size(); ++i) {
    if (!item_lookup_.emplace(item_ids_[i], i).second) {
      throw DataError("duplicate item id '" + item_ids_[i] + "'");
    }
  }

  user_offsets_.assign(user_ids_.size() + 1, 0);
  std::vector<std::size_t> item_counts(item_ids_.size() + 1, 0);
  for (const auto& x : interactions_) {
    ++user_offsets_[x.user + 1];
    ++item_counts[x.item + 1];
  }
  std::partial_sum(user_offsets_.begin(), user_offsets_.end(),
                   user_offsets_.begin());
  std::partial_sum(item_counts.begin(), item_counts.end(), item_counts.begin());
  item_offsets_ = item_counts;
  item_user_list_.assign(interactions_.size(), 0);
  std::vector<std::size_t> cursor(item_counts.begin(), item_counts.end() - 1);
  // interactions are sorted by user, so each item's list comes out ascending.
  for (const auto& x : interactions_) item_user_list_[cursor[x.item]++] = x.user;
}

Dataset Dataset::from_triples(const std::vector<Triple>& triples,
                              FeedbackKind kind,
                              std::optional<std::pair<double, double>> range) {
  std::vector<std::string> users;
  std::vector<std::string> items;
  std::unordered_map<std::string, Index> user_lookup;
  std::unordered_map<std::string, Index> item_lookup;
  std::map<std::pair<Index, Index>, std::size_t> position;
  std::vector<Interaction> interactions;

  auto intern = [](const std::string& id, std::vector<std::string>& ids,
                   std::unordered_map<std::string, Index>& lookup) {
    auto [it, inserted] = lookup.emplace(id, static_cast<Index>(ids.size()));
    if (inserted) ids.push_back(id);
    return it->second;
  };

  for (const auto& t : triples) {
    const Index u = intern(t.user, users, user_lookup);
    const Index i = intern(t.item, items, item_lookup);
    const double r = kind == FeedbackKind::kImplicit ? 1.0 : t.rating;
    auto [it, inserted] = position.emplace(std::pair{u, i}, interactions.size());
    if (inserted) {
      interactions.push_back({u, i, r, t.timestamp});
    } else {
      interactions[it->second] = {u, i, r, t.timestamp};
    }
  }

  double lo = 1.0;
  double hi = kind == FeedbackKind::kImplicit ? 1.0 : 5.0;
  if (range && kind == FeedbackKind::kExplicit) {
    std::tie(lo, hi) = *range;
  } else if (kind == FeedbackKind::kExplicit && !interactions.empty()) {
    auto [mn, mx] = std::minmax_element(
        interactions.begin(), interactions.end(),
        [](const Interaction& a, const Interaction& b) { return a.rating < b.rating; });
    lo = mn->rating;
    hi = mx->rating;
  }

  std::vector<Provenance> provenance(users.size());
  for (std::size_t u = 0; u < users.size(); ++u) {
    provenance[u] = is_reserved_fake_id(users[u]) ? Provenance::kFake
                                                  : Provenance::kReal;
  }
  return Dataset(std::move(users), std::move(items), std::move(interactions),
                 std::move(provenance), kind, lo, hi);
}

std::size_t Dataset::n_fake_users() const {
  return static_cast<std::size_t>(
      std::count(provenance_.begin(), provenance_.end(), Provenance::kFake));
}

std::span<const Interaction> Dataset::user_interactions(Index user) const {
  if (user >= user_ids_.size()) throw DataError("user index out of range");
  return std::span<const Interaction>(interactions_)
      .subspan(user_offsets_[user], user_offsets_[user + 1] - user_offsets_[user]);
}

std::span<const Index> Dataset::item_users(Index item) const {
  if (item >= item_ids_.size()) throw DataError("item index out of range");
  return std::span<const Index>(item_user_list_)
      .subspan(item_offsets_[item], item_offsets_[item + 1] - item_offsets_[item]);
}

std::size_t Dataset::user_degree(Index user) const {
  return user_interactions(user).size();
}

std::size_t Dataset::item_degree(Index item) const {
  return item_users(item).size();
}

std::optional<double> Dataset::rating(Index user, Index item) const {
  const auto row = user_interactions(user);
  auto it = std::lower_bound(
      row.begin(), row.end(), item,
      [](const Interaction& x, Index target) { return x.item < target; });
  if (it != row.end() && it->item == item) return it->rating;
  return std::nullopt;
}

bool Dataset::has_interaction(Index user, Index item) const {
  return rating(user, item).has_value();
}

std::optional<Index> Dataset::find_user(const std::string& id) const {
  auto it = user_lookup_.find(id);
  if (it == user_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<Index> Dataset::find_item(const std::string& id) const {
  auto it = item_lookup_.find(id);
  if (it == item_lookup_.end()) return std::nullopt;
  return it->second;
}

bool same_triples(const Dataset& a, const Dataset& b) {
  auto collect = [](const Dataset& d) {
    std::vector<std::tuple<std::string, std::string, double>> out;
    out.reserve(d.n_interactions());
    for (const auto& x : d.interactions()) {
      out.emplace_back(d.user_id(x.user), d.item_id(x.item), x.rating);
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  return a.n_interactions() == b.n_interactions() && collect(a) == collect(b);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_fields(const std::string& line,
                                      const std::string& delim) {
  std::vector<std::string> out;
  if (delim.size() == 1) {
    const char sep = delim[0];
    std::string field;
    bool quoted = false;
    for (std::size_t n = 0; n < line.size(); ++n) {
      const char c = line[n];
      if (quoted) {
        if (c == '"' && n + 1 < line.size() && line[n + 1] == '"') {
          field.push_back('"');
          ++n;
        } else if (c == '"') {
          quoted = false;
        } else {
          field.push_back(c);
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == sep) {
        out.push_back(std::move(field));
        field.clear();
      } else {
        field.push_back(c);
      }
    }
    out.push_back(std::move(field));
    return out;
  }
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + delim.size();
  }
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<std::int64_t> parse_int(const std::string& s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

struct ColumnLayout {
  std::optional<std::size_t> user, item, rating, timestamp, provenance;
};

std::optional<std::size_t> resolve_column(const std::string& source,
                                          const std::vector<std::string>& header) {
  if (!source.empty() && source[0] == '#') {
    auto n = parse_int(source.substr(1));
    if (!n || *n < 0) throw DataError("bad column index '" + source + "'");
    return static_cast<std::size_t>(*n);
  }
  auto it = std::find(header.begin(), header.end(), source);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

/// Streams rows of a delimited file as raw triples.
class CsvReader {
 public:
  CsvReader(const std::filesystem::path& path, const CsvSchema& schema,
            bool need_rating)
      : path_(path), schema_(schema), in_(path) {
    if (!std::filesystem::exists(path)) {
      throw DataError(path.string() + ": file not found");
    }
    if (!in_) throw DataError(path.string() + ": cannot open");
    std::vector<std::string> header;
    if (schema_.has_header) {
      std::string line;
      if (!next_line(line)) throw DataError(path.string() + ": empty file");
      for (auto& f : split_fields(line, schema_.delimiter)) {
        header.push_back(trim(f));
      }
    }
    layout_.user = resolve_column(schema_.user_col, header);
    layout_.item = resolve_column(schema_.item_col, header);
    layout_.rating = resolve_column(schema_.rating_col, header);
    layout_.timestamp = resolve_column(schema_.timestamp_col, header);
    layout_.provenance = resolve_column(schema_.provenance_col, header);
    if (!layout_.user) missing(schema_.user_col);
    if (!layout_.item) missing(schema_.item_col);
    if (need_rating && !layout_.rating) missing(schema_.rating_col);
  }

  bool has_rating() const { return layout_.rating.has_value(); }
  bool has_timestamp() const { return layout_.timestamp.has_value(); }
  std::size_t line_number() const { return line_no_; }

  /// Returns false at end of file.
  bool next(Triple& out, bool need_rating) {
    std::string line;
    while (next_line(line)) {
      if (trim(line).empty()) continue;
      const auto fields = split_fields(line, schema_.delimiter);
      auto field = [&](std::optional<std::size_t> col) -> std::optional<std::string> {
        if (!col || *col >= fields.size()) return std::nullopt;
        return trim(fields[*col]);
      };
      auto user = field(layout_.user);
      auto item = field(layout_.item);
      if (!user || user->empty() || !item || item->empty()) {
        fail("missing user or item field");
      }
      out.user = *user;
      out.item = *item;
      out.rating = 1.0;
      out.timestamp.reset();
      if (need_rating) {
        auto raw = field(layout_.rating);
        if (!raw || raw->empty()) fail("missing rating field");
        auto v = parse_double(*raw);
        if (!v) fail("unparsable rating '" + *raw + "'");
        out.rating = *v;
      }
      if (auto ts = field(layout_.timestamp); ts && !ts->empty()) {
        auto v = parse_int(*ts);
        if (!v) {
          // Fractional timestamps are truncated; anything else is an error.
          auto d = parse_double(*ts);
          if (!d) fail("unparsable timestamp '" + *ts + "'");
          v = static_cast<std::int64_t>(*d);
        }
        out.timestamp = v;
      }
      if (auto prov = field(layout_.provenance); prov && !prov->empty()) {
        const bool fake = *prov == "fake";
        if (!fake && *prov != "real") fail("bad provenance '" + *prov + "'");
        if (fake != is_reserved_fake_id(out.user)) {
          fail("provenance does not match the user id namespace");
        }
      } else if (is_reserved_fake_id(out.user)) {
        fail("user id '" + out.user + "' uses the reserved fake prefix");
      }
      return true;
    }
    return false;
  }

 private:
  bool next_line(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no_ == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    return true;
  }

  [[noreturn]] void missing(const std::string& col) {
    throw DataError(path_.string() + ": missing column '" + col + "'");
  }

  [[noreturn]] void fail(const std::string& what) {
    throw DataError(path_.string() + ": line " + std::to_string(line_no_) +
                    ": " + what);
  }

  std::filesystem::path path_;
  CsvSchema schema_;
  std::ifstream in_;
  ColumnLayout layout_;
  std::size_t line_no_ = 0;
};

}  // namespace

CsvSchema CsvSchema::from_column_map(const std::string& map) {
  CsvSchema schema;
  std::stringstream ss(map);
  std::string entry;
  while (std::getline(ss, entry, ',')) {
    entry = trim(entry);
    if (entry.empty()) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) {
      throw DataError("column map entry '" + entry + "' is not key=value");
    }
    const std::string key = trim(entry.substr(0, eq));
    const std::string value = trim(entry.substr(eq + 1));
    if (key == "user_id") {
      schema.user_col = value;
    } else if (key == "item_id") {
      schema.item_col = value;
    } else if (key == "rating") {
      schema.rating_col = value;
    } else if (key == "timestamp") {
      schema.timestamp_col = value;
    } else {
      throw DataError("unknown column map key '" + key + "'");
    }
  }
  return schema;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema,
                 FeedbackKind kind) {
  const bool need_rating = kind == FeedbackKind::kExplicit;
  CsvReader reader(path, schema, need_rating);
  std::vector<Triple> triples;
  Triple t;
  while (reader.next(t, need_rating)) triples.push_back(t);
  if (triples.empty()) throw DataError(path.string() + ": empty file");
  if (schema.rating_range && need_rating) {
    const auto [lo, hi] = *schema.rating_range;
    for (const auto& x : triples) {
      if (x.rating < lo || x.rating > hi) {
        throw DataError(path.string() + ": rating " + format_double(x.rating) +
                        " outside the declared scale");
      }
    }
  }
  return Dataset::from_triples(triples, kind, schema.rating_range);
}

void write_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot write");
  const bool any_ts = std::any_of(d.interactions().begin(), d.interactions().end(),
                                  [](const Interaction& x) { return x.timestamp.has_value(); });
  const bool any_fake = d.n_fake_users() > 0;
  out << "user_id,item_id,rating";
  if (any_ts) out << ",timestamp";
  if (any_fake) out << ",provenance";
  out << '\n';
  for (const auto& x : d.interactions()) {
    out << csv_escape(d.user_id(x.user)) << ',' << csv_escape(d.item_id(x.item))
        << ',' << format_double(x.rating);
    if (any_ts) {
      out << ',';
      if (x.timestamp) out << *x.timestamp;
    }
    if (any_fake) out << ',' << to_string(d.provenance(x.user));
    out << '\n';
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

std::size_t convert_csv(const std::filesystem::path& input,
                        const CsvSchema& schema,
                        const std::filesystem::path& output) {
  CsvReader probe(input, schema, false);
  const bool with_rating = probe.has_rating();
  CsvReader reader(input, schema, with_rating);
  std::ofstream out(output);
  if (!out) throw DataError(output.string() + ": cannot write");
  out << "user_id,item_id";
  if (with_rating) out << ",rating";
  if (reader.has_timestamp()) out << ",timestamp";
  out << '\n';
  std::size_t rows = 0;
  Triple t;
  while (reader.next(t, with_rating)) {
    out << csv_escape(t.user) << ',' << csv_escape(t.item);
    if (with_rating) out << ',' << format_double(t.rating);
    if (reader.has_timestamp()) {
      out << ',';
      if (t.timestamp) out << *t.timestamp;
    }
    out << '\n';
    ++rows;
  }
  if (rows == 0) throw DataError(input.string() + ": empty file");
  return rows;
}

// ---------------------------------------------------------------------------
// Preprocessing

namespace {

/// Rebuilds `d` keeping the flagged users and items, re-indexed in their
/// original order.
Dataset restrict(const Dataset& d, const std::vector<bool>& keep_user,
                 const std::vector<bool>& keep_item, FeedbackKind kind,
                 double lo, double hi, bool implicit_ratings) {
  std::vector<Index> user_map(d.n_users(), 0);
  std::vector<Index> item_map(d.n_items(), 0);
  std::vector<std::string> users;
  std::vector<std::string> items;
  std::vector<Provenance> provenance;
  for (Index u = 0; u < d.n_users(); ++u) {
    if (!keep_user[u]) continue;
    user_map[u] = static_cast<Index>(users.size());
    users.push_back(d.user_id(u));
    provenance.push_back(d.provenance(u));
  }
  for (Index i = 0; i < d.n_items(); ++i) {
    if (!keep_item[i]) continue;
    item_map[i] = static_cast<Index>(items.size());
    items.push_back(d.item_id(i));
  }
  std::vector<Interaction> interactions;
  for (const auto& x : d.interactions()) {
    if (!keep_user[x.user] || !keep_item[x.item]) continue;
    interactions.push_back({user_map[x.user], item_map[x.item],
                            implicit_ratings ? 1.0 : x.rating, x.timestamp});
  }
  return Dataset(std::move(users), std::move(items), std::move(interactions),
                 std::move(provenance), kind, lo, hi);
}

}  // namespace

Dataset preprocess_kcore(const Dataset& d, std::size_t k) {
  if (k == 0) throw DataError("k-core requires k >= 1");
  std::vector<std::size_t> user_deg(d.n_users());
  std::vector<std::size_t> item_deg(d.n_items());
  for (Index u = 0; u < d.n_users(); ++u) user_deg[u] = d.user_degree(u);
  for (Index i = 0; i < d.n_items(); ++i) item_deg[i] = d.item_degree(i);

  std::vector<bool> user_alive(d.n_users(), true);
  std::vector<bool> item_alive(d.n_items(), true);
  // Encode users as even and items as odd queue entries.
  std::queue<std::size_t> pending;
  for (Index u = 0; u < d.n_users(); ++u) {
    if (user_deg[u] < k) pending.push(2 * std::size_t{u});
  }
  for (Index i = 0; i < d.n_items(); ++i) {
    if (item_deg[i] < k) pending.push(2 * std::size_t{i} + 1);
  }
  while (!pending.empty()) {
    const std::size_t code = pending.front();
    pending.pop();
    const Index id = static_cast<Index>(code / 2);
    if (code % 2 == 0) {
      if (!user_alive[id]) continue;
      user_alive[id] = false;
      for (const auto& x : d.user_interactions(id)) {
        if (item_alive[x.item] && item_deg[x.item]-- == k) {
          pending.push(2 * std::size_t{x.item} + 1);
        }
      }
    } else {
      if (!item_alive[id]) continue;
      item_alive[id] = false;
      for (Index u : d.item_users(id)) {
        if (user_alive[u] && user_deg[u]-- == k) pending.push(2 * std::size_t{u});
      }
    }
  }
  if (std::none_of(user_alive.begin(), user_alive.end(), [](bool b) { return b; })) {
    throw DatasetEliminated("dataset eliminated by " + std::to_string(k) +
                            "-core filtering");
  }
  return restrict(d, user_alive, item_alive, d.feedback_kind(), d.rating_min(),
                  d.rating_max(), false);
}

Dataset binarize(const Dataset& d, double threshold) {
  if (d.feedback_kind() != FeedbackKind::kExplicit) {
    throw DataError("binarize: dataset is already implicit");
  }
  std::vector<Interaction> kept;
  for (const auto& x : d.interactions()) {
    if (x.rating >= threshold) kept.push_back({x.user, x.item, 1.0, x.timestamp});
  }
  if (kept.empty()) {
    throw DatasetEliminated("dataset eliminated: no rating >= " +
                            format_double(threshold));
  }
  return Dataset(d.user_ids(), d.item_ids(), std::move(kept), d.provenance(),
                 FeedbackKind::kImplicit, 1.0, 1.0);
}

TrainTestSplit split(const Dataset& d, const SplitSpec& spec) {
  if (spec.strategy == SplitStrategy::kRatio &&
      !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw DataError("train_fraction must lie in (0, 1)");
  }
  Rng rng = make_rng(spec.seed, 0x5b1);
  std::vector<Interaction> train;
  std::vector<Interaction> test;
  for (Index u = 0; u < d.n_users(); ++u) {
    const auto row = d.user_interactions(u);
    if (row.empty()) continue;
    std::vector<Interaction> mine(row.begin(), row.end());
    shuffle_in_place(mine, rng);
    std::size_t n_train = 0;
    if (spec.strategy == SplitStrategy::kLeaveOneOut) {
      if (mine.size() < 2) {
        throw DataError("leave-one-out: user '" + d.user_id(u) +
                        "' has a single interaction");
      }
      n_train = mine.size() - 1;
    } else {
      const auto n = static_cast<double>(mine.size());
      n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * n));
      n_train = std::clamp<std::size_t>(n_train, 1, mine.size());
    }
    train.insert(train.end(), mine.begin(), mine.begin() + n_train);
    test.insert(test.end(), mine.begin() + n_train, mine.end());
  }
  return {Dataset(d.user_ids(), d.item_ids(), std::move(train), d.provenance(),
                  d.feedback_kind(), d.rating_min(), d.rating_max()),
          Dataset(d.user_ids(), d.item_ids(), std::move(test), d.provenance(),
                  d.feedback_kind(), d.rating_min(), d.rating_max())};
}

// ---------------------------------------------------------------------------
// Batching

std::vector<Batch> generate_batch(const Dataset& d, const BatchSpec& spec,
                                  std::size_t epoch) {
  if (spec.batch_size == 0) throw DataError("batch_size must be positive");
  const bool pairwise = spec.mode == BatchMode::kPairwise;
  if (!pairwise && d.feedback_kind() != FeedbackKind::kExplicit) {
    throw DataError("pointwise batches require explicit feedback");
  }
  if (pairwise && d.feedback_kind() != FeedbackKind::kImplicit) {
    throw DataError("pairwise batches require implicit (binarized) feedback");
  }
  if (pairwise && spec.negatives_per_positive == 0) {
    throw DataError("negatives_per_positive must be positive");
  }

  Rng rng = make_rng(spec.shuffle_seed, 0xba7c0000ULL + epoch);
  std::vector<std::size_t> order(d.n_interactions());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle_in_place(order, rng);

  if (pairwise) {
    for (Index u = 0; u < d.n_users(); ++u) {
      const std::size_t deg = d.user_degree(u);
      if (deg > 0 && deg >= d.n_items()) {
        throw DataError("user '" + d.user_id(u) +
                        "' covers the full catalog; no negatives exist");
      }
    }
  }

  const std::size_t per_positive = pairwise ? spec.negatives_per_positive : 1;
  std::vector<Batch> batches;
  Batch current;
  for (std::size_t pos : order) {
    const Interaction& x = d.interactions()[pos];
    for (std::size_t n = 0; n < per_positive; ++n) {
      current.users.push_back(x.user);
      current.items.push_back(x.item);
      if (pairwise) {
        Index j;
        do {
          j = static_cast<Index>(uniform_index(rng, d.n_items()));
        } while (d.has_interaction(x.user, j));
        current.negatives.push_back(j);
      } else {
        current.ratings.push_back(x.rating);
      }
      if (current.size() == spec.batch_size) {
        batches.push_back(std::move(current));
        current = Batch{};
      }
    }
  }
  if (current.size() > 0) batches.push_back(std::move(current));
  return batches;
}

// ---------------------------------------------------------------------------
// Fake data manipulation

std::size_t FakeProfiles::n_ratings() const {
  std::size_t n = 0;
  for (const auto& p : profiles) n += p.ratings.size();
  return n;
}

std::vector<std::string> FakeProfiles::user_ids() const {
  std::vector<std::string> ids;
  ids.reserve(profiles.size());
  for (const auto& p : profiles) ids.push_back(p.user_id);
  return ids;
}

Dataset inject_data(const Dataset& d, const FakeProfiles& fake) {
  if (fake.profiles.empty()) return d;
  std::vector<std::string> users = d.user_ids();
  std::vector<Provenance> provenance = d.provenance();
  std::vector<Interaction> interactions(d.interactions().begin(),
                                        d.interactions().end());
  std::unordered_map<std::string, bool> seen;
  for (const auto& profile : fake.profiles) {
    if (!is_reserved_fake_id(profile.user_id)) {
      throw DataError("fake user id '" + profile.user_id +
                      "' is outside the reserved namespace");
    }
    if (d.find_user(profile.user_id) || !seen.emplace(profile.user_id, true).second) {
      throw DataError("fake user id collision: '" + profile.user_id + "'");
    }
    const auto u = static_cast<Index>(users.size());
    users.push_back(profile.user_id);
    provenance.push_back(Provenance::kFake);
    std::vector<bool> used(d.n_items(), false);
    for (const auto& [item, r] : profile.ratings) {
      if (item >= d.n_items()) {
        throw DataError("fake profile '" + profile.user_id +
                        "' rates an item outside the catalog");
      }
      if (used[item]) {
        throw DataError("fake profile '" + profile.user_id +
                        "' rates an item twice");
      }
      used[item] = true;
      const bool in_range = d.feedback_kind() == FeedbackKind::kImplicit
                                ? r == 1.0
                                : (r >= d.rating_min() && r <= d.rating_max());
      if (!in_range) {
        throw DataError("fake rating " + format_double(r) +
                        " outside the rating range");
      }
      interactions.push_back({u, item, r, std::nullopt});
    }
  }
  return Dataset(std::move(users), d.item_ids(), std::move(interactions),
                 std::move(provenance), d.feedback_kind(), d.rating_min(),
                 d.rating_max());
}

Dataset filter_data(const Dataset& d, const std::vector<std::string>& flagged) {
  if (flagged.empty()) return d;
  std::vector<bool> keep_user(d.n_users(), true);
  for (const auto& id : flagged) {
    auto u = d.find_user(id);
    if (!u) throw DataError("filter_data: unknown user '" + id + "'");
    keep_user[*u] = false;
  }
  std::vector<bool> keep_item(d.n_items(), true);
  return restrict(d, keep_user, keep_item, d.feedback_kind(), d.rating_min(),
                  d.rating_max(), false);
}

Dataset select_users(const Dataset& d, const std::vector<Index>& users) {
  std::vector<bool> keep_user(d.n_users(), false);
  for (Index u : users) keep_user.at(u) = true;
  std::vector<bool> keep_item(d.n_items(), true);
  return restrict(d, keep_user, keep_item, d.feedback_kind(), d.rating_min(),
                  d.rating_max(), false);
}

Dataset expose_fraction(const Dataset& d, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw DataError("exposure fraction outside [0, 1]");
  if (d.n_fake_users() > 0) {
    throw DataError("expose_fraction expects a dataset of real users only");
  }
  if (p == 1.0) return d;
  const auto count = static_cast<std::size_t>(
      std::floor(p * static_cast<double>(d.n_users()) + 1e-9));
  std::vector<Index> all(d.n_users());
  std::iota(all.begin(), all.end(), Index{0});
  Rng rng = make_rng(seed, 0xe8905e);
  auto chosen = sample_without_replacement(std::move(all), count, rng);
  std::sort(chosen.begin(), chosen.end());
  return select_users(d, chosen);
}

void write_fake_profiles_csv(const FakeProfiles& fake, const Dataset& catalog,
                             const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot write");
  out << "user_id,item_id,rating,provenance\n";
  for (const auto& p : fake.profiles) {
    for (const auto& [item, r] : p.ratings) {
      out << csv_escape(p.user_id) << ',' << csv_escape(catalog.item_id(item))
          << ',' << format_double(r) << ",fake\n";
    }
  }
}

nlohmann::json info_describe(const Dataset& d) {
  return {{"n_users", d.n_users()},
          {"n_items", d.n_items()},
          {"n_interactions", d.n_interactions()},
          {"feedback_kind", to_string(d.feedback_kind())},
          {"rating_min", d.rating_min()},
          {"rating_max", d.rating_max()},
          {"n_fake_users", d.n_fake_users()}};
}

}  // namespace shillbench
