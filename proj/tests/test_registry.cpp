#include <doctest.h>

#include "shillbench/registry.hpp"

using namespace shillbench;

namespace {

ComponentEntry passive(std::vector<std::string> runtime, std::vector<std::string> provides) {
  ComponentEntry e;
  e.defaults = {{"alpha", 1.0}};
  e.runtime = std::move(runtime);
  e.provides = provides;
  e.build = [provides](const ComponentSpec& spec, const nlohmann::json&) {
    struct Stub : Component {
      Stub(ComponentSpec s, std::vector<std::string> keys) : Component(std::move(s)), keys_(std::move(keys)) {}
      nlohmann::json info_describe() const override {
        nlohmann::json j = Component::info_describe();
        for (const auto& k : keys_) j[k] = 1;
        return j;
      }
      std::vector<std::string> keys_;
    };
    return std::make_shared<Stub>(spec, provides);
  };
  return e;
}

std::shared_ptr<Component> live_dataset(const Registry& r) {
  auto c = r.from_config(ComponentKind::kDataset, "synthetic_low_rank", {}, {{"data_seed", 3}});
  REQUIRE(std::holds_alternative<std::shared_ptr<Component>>(c));
  return std::get<std::shared_ptr<Component>>(c);
}

}  // namespace

TEST_SUITE("registry") {

TEST_CASE("built-ins are listed sorted") {
  Registry r = Registry::with_builtins();
  CHECK(r.list(ComponentKind::kVictim) == std::vector<std::string>{"mf_bpr", "mf_explicit"});
  CHECK(r.list(ComponentKind::kAttacker) ==
        std::vector<std::string>{"average", "bandwagon", "pga", "random", "segment"});
  CHECK(r.list(ComponentKind::kDefender) ==
        std::vector<std::string>{"degree_sad", "fap", "pca_select_users", "semi_sad"});
  CHECK(r.defaults(ComponentKind::kVictim, "mf_explicit")["latent_dim"] == 16);
  CHECK(parse_component_kind(to_string(ComponentKind::kDefender)) == ComponentKind::kDefender);
  CHECK_THROWS(parse_component_kind("gadget"));
}

TEST_CASE("registration") {
  Registry r;
  r.register_component(ComponentKind::kAttacker, "zeta", passive({}, {}));
  r.register_component(ComponentKind::kAttacker, "alpha", passive({}, {}));
  CHECK(r.list(ComponentKind::kAttacker) == std::vector<std::string>{"alpha", "zeta"});
  CHECK(r.defaults(ComponentKind::kAttacker, "zeta") == nlohmann::json{{"alpha", 1.0}});
  CHECK_THROWS_AS(r.register_component(ComponentKind::kAttacker, "zeta", passive({}, {})),
                  RegistryError);
  CHECK_THROWS_AS(r.entry(ComponentKind::kVictim, "zeta"), RegistryError);
}

TEST_CASE("merge and from_config") {
  Registry r = Registry::with_builtins();
  auto plain = r.merge(ComponentKind::kVictim, "mf_explicit", {});
  CHECK(plain.params == r.defaults(ComponentKind::kVictim, "mf_explicit"));
  auto over = r.merge(ComponentKind::kVictim, "mf_explicit", {{"latent_dim", 32}});
  CHECK(over.params["latent_dim"] == 32);
  CHECK(over.params["epochs"] == 50);
  CHECK_THROWS_WITH_AS(r.merge(ComponentKind::kVictim, "mf_explicit", {{"latent_dmi", 32}}),
                       doctest::Contains("latent_dmi"), RegistryError);
  CHECK_THROWS_AS(r.merge(ComponentKind::kVictim, "mf_explicit", {{"latent_dim", "big"}}),
                  RegistryError);
  CHECK_THROWS_AS(r.merge(ComponentKind::kVictim, "mf_explicit", {{"latent_dim", -3}}),
                  RegistryError);
  CHECK_NOTHROW(r.merge(ComponentKind::kVictim, "mf_explicit", {{"learning_rate", 1}}));
  CHECK_THROWS_AS(r.merge(ComponentKind::kVictim, "mf_huge", {}), RegistryError);

  auto lazy = r.from_config(ComponentKind::kVictim, "mf_explicit", {{"latent_dim", 32}});
  REQUIRE(std::holds_alternative<LazyHandle>(lazy));
  auto missing = std::get<LazyHandle>(lazy).missing;
  std::sort(missing.begin(), missing.end());
  CHECK(missing == std::vector<std::string>{"n_items", "n_users"});

  auto live = r.from_config(ComponentKind::kVictim, "mf_explicit", {},
                            {{"n_users", 4}, {"n_items", 5}});
  REQUIRE(std::holds_alternative<std::shared_ptr<Component>>(live));
  auto info = std::get<std::shared_ptr<Component>>(live)->info_describe();
  CHECK(info["latent_dim"] == 16);
  CHECK(info["kind"] == "explicit");
}

TEST_CASE("resolve fills runtime values from other components") {
  Registry r = Registry::with_builtins();
  auto data = live_dataset(r);
  CHECK(data->info_describe()["n_users"] == 50);
  auto lazy = std::get<LazyHandle>(r.from_config(ComponentKind::kVictim, "mf_bpr", {}));
  auto out = r.resolve({lazy}, {}, {data});
  REQUIRE(out.size() == 2);
  CHECK(out[0] == data);
  auto victim = std::dynamic_pointer_cast<VictimComponent>(out[1]);
  REQUIRE(victim);
  CHECK(victim->info_describe()["n_users"] == 50);
  CHECK(victim->info_describe()["n_items"] == 40);
  CHECK(victim->info_describe() == victim->info_describe());

  CHECK(r.resolve({}, {}, {data}) == std::vector<std::shared_ptr<Component>>{data});
  CHECK_THROWS_WITH_AS(r.resolve({lazy}, {}), doctest::Contains("n_users"), RegistryError);
}

TEST_CASE("resolve orders handles and detects cycles") {
  Registry r;
  r.register_component(ComponentKind::kDataset, "src", passive({"seed_value"}, {"width"}));
  r.register_component(ComponentKind::kVictim, "sink", passive({"width"}, {"depth"}));
  r.register_component(ComponentKind::kAttacker, "mid", passive({"depth"}, {}));
  auto h = [&](ComponentKind k, const std::string& n) {
    return std::get<LazyHandle>(r.from_config(k, n, {}));
  };
  auto out = r.resolve({h(ComponentKind::kAttacker, "mid"), h(ComponentKind::kVictim, "sink"),
                        h(ComponentKind::kDataset, "src")},
                       {{"seed_value", 1}});
  REQUIRE(out.size() == 3);
  CHECK(out[0]->spec().name == "src");
  CHECK(out[1]->spec().name == "sink");
  CHECK(out[2]->spec().name == "mid");

  Registry cyc;
  cyc.register_component(ComponentKind::kAttacker, "a", passive({"from_b"}, {"from_a"}));
  cyc.register_component(ComponentKind::kDefender, "b", passive({"from_a"}, {"from_b"}));
  auto ha = std::get<LazyHandle>(cyc.from_config(ComponentKind::kAttacker, "a", {}));
  auto hb = std::get<LazyHandle>(cyc.from_config(ComponentKind::kDefender, "b", {}));
  CHECK_THROWS_WITH_AS(cyc.resolve({ha, hb}, {}), doctest::Contains("cycle"), RegistryError);
}

TEST_CASE("dataset paths honor the data root") {
  CHECK(resolve_data_path("/abs/x.csv", std::string("/root")) == "/abs/x.csv");
  CHECK(resolve_data_path("ml/x.csv", std::string("/data")) == "/data/ml/x.csv");
  ::setenv("SHILLBENCH_DATA_DIR", "/envroot", 1);
  CHECK(resolve_data_path("x.csv", std::nullopt) == "/envroot/x.csv");
  ::unsetenv("SHILLBENCH_DATA_DIR");
  CHECK(resolve_data_path("x.csv", std::nullopt) == std::filesystem::path("x.csv"));
}

}  // TEST_SUITE
