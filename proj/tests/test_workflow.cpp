#include <doctest.h>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "shillbench/workflow.hpp"

using namespace shillbench;
using namespace testing_support;

namespace {

/// Small and fast: 120 x 80 skewed data, 8 training epochs.
nlohmann::json base_config() {
  return {
      {"dataset", {{"name", "synthetic_skewed"},
                   {"params", {{"n_users", 120}, {"n_items", 80}, {"median_profile", 12.0}}}}},
      {"victim", {{"name", "mf_explicit"}, {"params", {{"epochs", 8}, {"latent_dim", 8}}}}},
      {"workflow", {{"eval_ks", {5, 10}}, {"seeds", {{"data", 1}, {"attack", 2}, {"victim", 3}}}}}};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> stage_names(const WorkflowReport& r) {
  std::vector<std::string> out;
  for (const auto& s : r.stages) out.push_back(s.name);
  return out;
}

}  // namespace

TEST_SUITE("workflow") {

TEST_CASE("config parsing") {
  WorkflowConfig c = WorkflowConfig::from_json(base_config());
  CHECK(c.eval_ks == std::vector<std::size_t>{5, 10});
  CHECK(c.seeds.victim == 3);
  CHECK(c.knowledge == Knowledge::kWhiteBox);
  CHECK(c.to_json()["victim"]["params"]["reg_lambda"] == 0.05);

  auto bad = base_config();
  bad["extras"] = 1;
  CHECK_THROWS_AS(WorkflowConfig::from_json(bad), WorkflowError);
  bad = base_config();
  bad["victim"]["params"]["latent_dmi"] = 3;
  CHECK_THROWS_WITH_AS(WorkflowConfig::from_json(bad), doctest::Contains("latent_dmi"), WorkflowError);
  bad = base_config();
  bad["workflow"]["budget"] = {{"fakes", 3}};
  CHECK_THROWS_AS(WorkflowConfig::from_json(bad), WorkflowError);
  bad = base_config();
  bad["workflow"]["eval_ks"] = {10, 5};
  CHECK_THROWS_AS(WorkflowConfig::from_json(bad).validate(), WorkflowError);
  bad = base_config();
  bad["workflow"]["knowledge"] = "gray_box";
  bad["workflow"]["exposure"] = 0.0;
  CHECK_THROWS_AS(WorkflowConfig::from_json(bad).validate(), WorkflowError);
}

TEST_CASE("black box is reserved") {
  auto j = base_config();
  j["attacker"] = {{"name", "random"}};
  j["workflow"]["knowledge"] = "black_box";
  CHECK_THROWS_WITH_AS(execute(WorkflowConfig::from_json(j)), doctest::Contains("unimplemented"),
                       WorkflowError);
}

TEST_CASE("no attacker yields the baseline only") {
  WorkflowReport r = execute(WorkflowConfig::from_json(base_config()));
  CHECK(stage_names(r) == std::vector<std::string>{"baseline"});
  CHECK(r.status == "complete");
  REQUIRE(r.stages[0].attack_metrics);
  CHECK(r.stages[0].attack_metrics->ks == std::vector<std::size_t>{5, 10});
  CHECK(r.stages[0].held_out.count("rmse") == 1);
  CHECK(r.seeds.size() == 4);
  CHECK(r.components.contains("victim"));
}

TEST_CASE("gray box exposes floor(p * users)") {
  auto j = base_config();
  j["attacker"] = {{"name", "average"}};
  j["workflow"]["knowledge"] = "gray_box";
  j["workflow"]["exposure"] = 0.2;
  WorkflowReport r = execute(WorkflowConfig::from_json(j));
  const StageReport* attack = r.stage("attack");
  REQUIRE(attack);
  const std::size_t users = attack->details["leakage_audit"]["train_users"];
  CHECK(attack->details["exposed_users"] == users / 5);
  CHECK(attack->details["leakage_audit"]["foreign_interactions"] == 0);
  CHECK(r.stage("post_attack"));
  const auto& pre = r.stage("baseline")->attack_metrics->mean_hr;
  CHECK(pre.size() == 2);
}

TEST_CASE("full pipeline with a defender is deterministic") {
  auto j = base_config();
  j["attacker"] = {{"name", "bandwagon"}};
  j["defender"] = {{"name", "degree_sad"}};
  j["workflow"]["budget"] = {{"attack_fraction", 0.05}, {"n_targets", 2}};
  auto dir_a = scratch_dir("wf");
  auto dir_b = scratch_dir("wf");
  j["workflow"]["output_dir"] = dir_a.string();
  WorkflowReport a = execute(WorkflowConfig::from_json(j));
  j["workflow"]["output_dir"] = dir_b.string();
  WorkflowReport b = execute(WorkflowConfig::from_json(j));
  CHECK(stage_names(a) == std::vector<std::string>{"baseline", "attack", "calibrate", "defense",
                                                   "post_attack", "post_defense"});
  REQUIRE(a.stage("defense")->detection_metrics);
  CHECK(a.detection->users.size() == a.stage("attack")->details["leakage_audit"]["train_users"].get<std::size_t>() +
                                         a.stage("attack")->details["n_fake_users"].get<std::size_t>());
  // Configs differ only in output_dir.
  auto da = report_document(a), db = report_document(b);
  da["config"].erase("workflow");
  db["config"].erase("workflow");
  CHECK(da == db);
  CHECK(std::filesystem::exists(dir_a / "run.log"));
  CHECK(std::filesystem::exists(dir_a / "attack_metrics.csv"));
  CHECK(read_report(dir_a) == a);
  CHECK_FALSE(slurp(dir_a / "report.json").empty());
}

TEST_CASE("byte-identical reports for the same config") {
  auto j = base_config();
  j["attacker"] = {{"name", "random"}};
  auto dir = scratch_dir("same");
  j["workflow"]["output_dir"] = dir.string();
  execute(WorkflowConfig::from_json(j));
  const std::string first = slurp(dir / "report.json");
  execute(WorkflowConfig::from_json(j));
  CHECK(slurp(dir / "report.json") == first);
}

TEST_CASE("hooks fire and early stop cuts training") {
  auto j = base_config();
  j["victim"]["params"]["epochs"] = 40;
  j["workflow"]["early_stop_patience"] = 0;
  ExecuteOptions opt;
  std::size_t epochs = 0, stages = 0, runs = 0;
  opt.hooks.on_epoch("count", [&](const EpochEvent&) { return ++epochs < 3; });
  opt.hooks.on_stage("stages", [&](const StageReport&) { ++stages; });
  opt.hooks.on_run("runs", [&](const WorkflowReport&) { ++runs; });
  WorkflowReport r = execute(WorkflowConfig::from_json(j), opt);
  CHECK(epochs == 3);
  CHECK(r.stages[0].epoch_losses.size() == 3);
  CHECK(stages == 1);
  CHECK(runs == 1);

  auto stop = early_stop_hook(2);
  EpochEvent e{"s", 1, 1.0, {{"rmse", 1.0}}};
  CHECK(stop(e));
  e.held_out["rmse"] = 1.1;
  CHECK(stop(e));
  CHECK_FALSE(stop(e));
}

TEST_CASE("failures name the stage and leave a partial report") {
  auto j = base_config();
  j["attacker"] = {{"name", "bandwagon"}};
  // More fillers than catalog items makes the budget infeasible.
  j["workflow"]["budget"] = {{"filler_size", 500}};
  auto dir = scratch_dir("fail");
  j["workflow"]["output_dir"] = dir.string();
  try {
    execute(WorkflowConfig::from_json(j));
    FAIL("expected a failure");
  } catch (const WorkflowError& e) {
    CHECK(e.stage() == "attack");
    CHECK(std::string(e.what()).find("stage 'attack'") == 0);
  }
  WorkflowReport partial = read_report(dir);
  CHECK(partial.status == "failed");
  CHECK(partial.failed_stage.value() == "attack");
  CHECK(partial.stage("baseline"));

  auto missing = base_config();
  missing["dataset"] = {{"name", "csv"}, {"params", {{"path", "nowhere/ratings.csv"}}}};
  try {
    execute(WorkflowConfig::from_json(missing));
    FAIL("expected a failure");
  } catch (const WorkflowError& e) {
    CHECK(e.stage() == "load");
  }
}

TEST_CASE("csv datasets resolve against the data root") {
  auto root = scratch_dir("root");
  std::filesystem::create_directories(root / "toy");
  Dataset d = random_dataset(4, 60, 40, 0.2, 6);
  write_csv(d, root / "toy" / "ratings.csv");
  auto j = base_config();
  j["dataset"] = {{"name", "csv"}, {"params", {{"path", "toy/ratings.csv"}}}};
  ExecuteOptions opt;
  opt.data_dir = root.string();
  WorkflowReport r = execute(WorkflowConfig::from_json(j), opt);
  CHECK(r.stage("baseline")->details["dataset"]["n_users"] == d.n_users());
}

TEST_CASE("helpers: targets, budget, audit, alignment") {
  Dataset train = random_dataset(5, 50, 30, 0.2, 3);
  auto targets = sample_targets(train, 3, 1);
  CHECK(targets.size() == 3);
  CHECK(std::is_sorted(targets.begin(), targets.end()));
  CHECK(sample_targets(train, 3, 1) == targets);

  AttackBudget b = resolve_budget({}, train, targets);
  CHECK(b.n_fake_users == 1);
  CHECK(b.selected_size >= 1);

  Dataset exposed = expose_fraction(train, 0.2, 3);
  LeakageAudit clean = audit_exposure(train, exposed.user_ids(), exposed);
  CHECK(clean.exposed_users == 10);
  CHECK(clean.foreign_interactions == 0);
  LeakageAudit leaky = audit_exposure(train, exposed.user_ids(), train);
  CHECK(leaky.foreign_interactions > 0);

  Dataset aligned = align_to(exposed, train);
  CHECK(aligned.item_ids() == train.item_ids());
  CHECK(same_triples(aligned, exposed));
}

}  // TEST_SUITE
