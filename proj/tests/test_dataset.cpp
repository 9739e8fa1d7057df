#include <doctest.h>

#include <fstream>
#include <map>

#include "helpers.hpp"
#include "shillbench/dataset.hpp"

using namespace shillbench;
using namespace testing_support;

namespace {

std::filesystem::path write_file(const std::filesystem::path& dir, const std::string& name,
                                 const std::string& body) {
  auto path = dir / name;
  std::ofstream(path) << body;
  return path;
}

Dataset small_explicit() {
  return Dataset::from_triples({{"u1", "i1", 5}, {"u1", "i2", 3}, {"u2", "i1", 4}},
                               FeedbackKind::kExplicit, std::make_pair(1.0, 5.0));
}

FakeProfiles two_fakes(std::size_t ratings_each, std::size_t n_items) {
  FakeProfiles f;
  for (std::size_t k = 0; k < 2; ++k) {
    FakeProfile p{fake_user_id(k), {}};
    for (std::size_t i = 0; i < ratings_each; ++i) p.ratings.emplace_back(Index(i % n_items), 5.0);
    f.profiles.push_back(p);
  }
  return f;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("load_csv reads rows and collapses duplicates") {
  auto dir = scratch_dir("csv");
  auto path = write_file(dir, "r.csv", "user_id,item_id,rating\nu1,i1,5\nu1,i2,3\nu2,i1,4\n");
  Dataset d = load_csv(path, CsvSchema{}, FeedbackKind::kExplicit);
  CHECK(d.n_users() == 2);
  CHECK(d.n_items() == 2);
  CHECK(d.n_interactions() == 3);
  for (Index u = 0; u < d.n_users(); ++u) CHECK(d.provenance(u) == Provenance::kReal);

  auto dup = write_file(dir, "d.csv", "user_id,item_id,rating\nu1,i1,5\nu1,i1,5\nu1,i2,3\nu2,i1,4\n");
  CHECK(load_csv(dup, CsvSchema{}, FeedbackKind::kExplicit).n_interactions() == 3);

  // The last occurrence of a pair wins.
  auto later = write_file(dir, "l.csv", "user_id,item_id,rating\nu1,i1,5\nu1,i1,2\n");
  Dataset l = load_csv(later, CsvSchema{}, FeedbackKind::kExplicit);
  CHECK(l.rating(0, 0).value() == 2.0);
}

TEST_CASE("load_csv errors name the problem") {
  auto dir = scratch_dir("csverr");
  auto missing_rating = write_file(dir, "m.csv", "user_id,item_id,rating\nu1,i1,5\nu2,i2,\n");
  try {
    load_csv(missing_rating, CsvSchema{}, FeedbackKind::kExplicit);
    FAIL("expected a parse error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(load_csv(dir / "nope.csv", CsvSchema{}, FeedbackKind::kExplicit), DataError);
  auto empty = write_file(dir, "e.csv", "");
  CHECK_THROWS_AS(load_csv(empty, CsvSchema{}, FeedbackKind::kExplicit), DataError);
  auto no_item = write_file(dir, "c.csv", "user_id,rating\nu1,5\n");
  CHECK_THROWS_WITH_AS(load_csv(no_item, CsvSchema{}, FeedbackKind::kExplicit),
                       doctest::Contains("item_id"), DataError);
  auto bad = write_file(dir, "b.csv", "user_id,item_id,rating\nu1,i1,five\n");
  CHECK_THROWS_AS(load_csv(bad, CsvSchema{}, FeedbackKind::kExplicit), DataError);
}

TEST_CASE("column maps, positional columns and the reserved fake prefix") {
  auto dir = scratch_dir("colmap");
  auto path = write_file(dir, "ml.dat", "1::10::4::978300760\n2::10::5::978300761\n");
  CsvSchema s = CsvSchema::from_column_map("user_id=#0,item_id=#1,rating=#2,timestamp=#3");
  s.delimiter = "::";
  s.has_header = false;
  Dataset d = load_csv(path, s, FeedbackKind::kExplicit);
  CHECK(d.n_users() == 2);
  CHECK(d.interactions()[0].timestamp.value() == 978300760);

  CHECK_THROWS_AS(CsvSchema::from_column_map("user=#0"), DataError);

  auto fake = write_file(dir, "f.csv", "user_id,item_id,rating\nfake:0,i1,5\n");
  CHECK_THROWS_AS(load_csv(fake, CsvSchema{}, FeedbackKind::kExplicit), DataError);
}

TEST_CASE("write_csv and convert_csv round trip") {
  auto dir = scratch_dir("rt");
  Dataset d = random_dataset(3, 12, 9, 0.4);
  write_csv(d, dir / "out.csv");
  CHECK(same_triples(load_csv(dir / "out.csv", CsvSchema{}, FeedbackKind::kExplicit), d));

  auto foreign = write_file(dir, "f.csv", "userId;movieId;stars\na;x;3\nb;y;4\n");
  CsvSchema s = CsvSchema::from_column_map("user_id=userId,item_id=movieId,rating=stars");
  s.delimiter = ";";
  CHECK(convert_csv(foreign, s, dir / "canon.csv") == 2);
  Dataset c = load_csv(dir / "canon.csv", CsvSchema{}, FeedbackKind::kExplicit);
  CHECK(c.n_interactions() == 2);
  CHECK(c.rating(*c.find_user("b"), *c.find_item("y")).value() == 4.0);
}

TEST_CASE("k-core peeling") {
  Dataset d = Dataset::from_triples({{"u1", "i1", 5}, {"u1", "i2", 4}, {"u2", "i1", 3},
                                     {"u2", "i2", 2}, {"u3", "i3", 1}},
                                    FeedbackKind::kExplicit, std::make_pair(1.0, 5.0));
  Dataset k2 = preprocess_kcore(d, 2);
  CHECK(k2.n_users() == 2);
  CHECK(k2.n_items() == 2);
  CHECK(k2.n_interactions() == 4);
  CHECK_FALSE(k2.find_user("u3").has_value());

  Dataset k1 = preprocess_kcore(d, 1);
  CHECK(same_triples(k1, d));
  CHECK(k1.n_users() == d.n_users());

  CHECK_THROWS_AS(preprocess_kcore(d, 5), DatasetEliminated);
  CHECK_THROWS_AS(preprocess_kcore(d, 0), DataError);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Dataset r = random_dataset(seed, 40, 30, 0.15);
    Dataset c = preprocess_kcore(r, 3);
    for (Index u = 0; u < c.n_users(); ++u) CHECK(c.user_degree(u) >= 3);
    for (Index i = 0; i < c.n_items(); ++i) CHECK(c.item_degree(i) >= 3);
    CHECK(same_triples(preprocess_kcore(c, 3), c));
  }
}

TEST_CASE("binarize") {
  Dataset d = Dataset::from_triples({{"u1", "i1", 5}, {"u1", "i2", 4}, {"u1", "i3", 3}},
                                    FeedbackKind::kExplicit, std::make_pair(1.0, 5.0));
  Dataset b = binarize(d, 4);
  CHECK(b.n_interactions() == 2);
  CHECK(b.feedback_kind() == FeedbackKind::kImplicit);
  for (const auto& x : b.interactions()) CHECK(x.rating == 1.0);
  CHECK(binarize(d, 1.0).n_interactions() == 3);
  CHECK_THROWS_AS(binarize(d, 6.0), DatasetEliminated);
  CHECK_THROWS_AS(binarize(b, 1.0), DataError);
}

TEST_CASE("split partitions per user") {
  std::vector<Triple> t;
  for (int i = 0; i < 10; ++i) t.push_back({"u", "i" + std::to_string(i), 3.0, std::nullopt});
  Dataset d = Dataset::from_triples(t, FeedbackKind::kExplicit, std::make_pair(1.0, 5.0));
  auto s = split(d, {SplitStrategy::kRatio, 0.8, 1});
  CHECK(s.train.n_interactions() == 8);
  CHECK(s.test.n_interactions() == 2);

  Dataset r = random_dataset(4, 5, 20, 0.3, 3);
  auto loo = split(r, {SplitStrategy::kLeaveOneOut, 0.8, 2});
  CHECK(loo.test.n_interactions() == 5);
  auto again = split(r, {SplitStrategy::kLeaveOneOut, 0.8, 2});
  CHECK(same_triples(loo.test, again.test));
  CHECK(same_triples(loo.train, again.train));

  auto triples = triple_set(loo.train);
  auto test = triple_set(loo.test);
  for (const auto& x : test) CHECK(triples.count(x) == 0);
  triples.insert(test.begin(), test.end());
  CHECK(triples == triple_set(r));

  Dataset single = Dataset::from_triples({{"a", "x", 1}}, FeedbackKind::kExplicit,
                                         std::make_pair(1.0, 5.0));
  CHECK_THROWS_AS(split(single, {SplitStrategy::kLeaveOneOut, 0.8, 0}), DataError);
}

TEST_CASE("pointwise batches cover each epoch exactly once") {
  Dataset five = Dataset::from_triples({{"a", "x", 1}, {"a", "y", 2}, {"b", "x", 3},
                                        {"b", "z", 4}, {"c", "y", 5}},
                                       FeedbackKind::kExplicit, std::make_pair(1.0, 5.0));
  auto batches = generate_batch(five, {BatchMode::kPointwise, 2, 1, 9});
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 2);
  CHECK(batches[1].size() == 2);
  CHECK(batches[2].size() == 1);

  Dataset d = random_dataset(5, 30, 25, 0.2);
  for (std::size_t epoch = 0; epoch < 3; ++epoch) {
    std::multiset<std::tuple<Index, Index, double>> seen;
    for (const auto& b : generate_batch(d, {BatchMode::kPointwise, 7, 1, 11}, epoch)) {
      for (std::size_t n = 0; n < b.size(); ++n) seen.emplace(b.users[n], b.items[n], b.ratings[n]);
    }
    std::multiset<std::tuple<Index, Index, double>> expected;
    for (const auto& x : d.interactions()) expected.emplace(x.user, x.item, x.rating);
    CHECK(seen == expected);
  }
  auto a = generate_batch(d, {BatchMode::kPointwise, 7, 1, 11});
  auto b = generate_batch(d, {BatchMode::kPointwise, 7, 1, 11});
  REQUIRE(a.size() == b.size());
  for (std::size_t n = 0; n < a.size(); ++n) {
    CHECK(a[n].users == b[n].users);
    CHECK(a[n].items == b[n].items);
  }
}

TEST_CASE("pairwise negatives are unobserved") {
  Dataset d = binarize(random_dataset(6, 30, 25, 0.3), 3.0);
  auto batches = generate_batch(d, {BatchMode::kPairwise, 16, 2, 3});
  std::size_t total = 0;
  for (const auto& b : batches) {
    for (std::size_t n = 0; n < b.size(); ++n) {
      CHECK(d.has_interaction(b.users[n], b.items[n]));
      CHECK_FALSE(d.has_interaction(b.users[n], b.negatives[n]));
    }
    total += b.size();
  }
  CHECK(total == 2 * d.n_interactions());

  CHECK_THROWS_AS(generate_batch(d, {BatchMode::kPointwise, 16, 1, 0}), DataError);
  Dataset full = binarize(Dataset::from_triples({{"a", "x", 5}, {"a", "y", 5}, {"b", "x", 5}},
                                                FeedbackKind::kExplicit,
                                                std::make_pair(1.0, 5.0)),
                          1.0);
  CHECK_THROWS_AS(generate_batch(full, {BatchMode::kPairwise, 4, 1, 0}), DataError);
}

TEST_CASE("inject and filter") {
  Dataset d = random_dataset(7, 10, 8, 0.5);
  FakeProfiles f = two_fakes(4, d.n_items());
  Dataset poisoned = inject_data(d, f);
  CHECK(poisoned.n_users() == d.n_users() + 2);
  CHECK(poisoned.n_interactions() == d.n_interactions() + 8);
  CHECK(poisoned.n_fake_users() == 2);
  CHECK(info_describe(poisoned)["n_fake_users"] == 2);

  Dataset back = filter_data(poisoned, f.user_ids());
  CHECK(same_triples(back, d));
  CHECK(back.n_fake_users() == 0);
  CHECK(same_triples(inject_data(d, FakeProfiles{}), d));
  CHECK(same_triples(filter_data(d, {}), d));
  CHECK(info_describe(filter_data(d, {})) == info_describe(d));

  const std::string victim = d.user_id(3);
  Dataset without = filter_data(d, {victim});
  CHECK(without.n_interactions() == d.n_interactions() - d.user_degree(3));
  CHECK_THROWS_AS(filter_data(d, {"ghost"}), DataError);

  FakeProfiles unknown_item;
  unknown_item.profiles.push_back({fake_user_id(0), {{Index(d.n_items()), 5.0}}});
  CHECK_THROWS_AS(inject_data(d, unknown_item), DataError);
  FakeProfiles bad_rating;
  bad_rating.profiles.push_back({fake_user_id(0), {{0, 9.0}}});
  CHECK_THROWS_AS(inject_data(d, bad_rating), DataError);
  CHECK_THROWS_AS(inject_data(poisoned, f), DataError);
}

TEST_CASE("expose_fraction samples whole profiles") {
  Dataset d = random_dataset(8, 10, 12, 0.4);
  Dataset e = expose_fraction(d, 0.2, 5);
  std::size_t with_data = 0;
  for (Index u = 0; u < e.n_users(); ++u) {
    if (e.user_degree(u) == 0) continue;
    ++with_data;
    Index src = *d.find_user(e.user_id(u));
    CHECK(e.user_degree(u) == d.user_degree(src));
  }
  CHECK(e.n_users() == 2);
  CHECK(with_data == 2);
  CHECK(e.n_items() == d.n_items());
  CHECK(expose_fraction(d, 0.2, 5).user_ids() == e.user_ids());
  CHECK(same_triples(expose_fraction(d, 1.0, 5), d));
  CHECK(expose_fraction(d, 0.0, 5).n_interactions() == 0);
}

TEST_CASE("info_describe counts") {
  auto info = info_describe(small_explicit());
  CHECK(info["n_users"] == 2);
  CHECK(info["n_items"] == 2);
  CHECK(info["n_interactions"] == 3);
  CHECK(info["n_fake_users"] == 0);
  CHECK(info.contains("feedback_kind"));
}

TEST_CASE("operations leave their input untouched") {
  Dataset d = random_dataset(9, 20, 15, 0.3, 2);
  auto before = triple_set(d);
  auto ids = d.user_ids();
  (void)preprocess_kcore(d, 2);
  (void)split(d, {});
  (void)expose_fraction(d, 0.5, 1);
  (void)inject_data(d, two_fakes(3, d.n_items()));
  CHECK(triple_set(d) == before);
  CHECK(d.user_ids() == ids);
}

}  // TEST_SUITE
