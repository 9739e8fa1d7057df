#include "shillbench/workflow.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "shillbench/random.hpp"

namespace shillbench {

std::string to_string(Knowledge k) {
  switch (k) {
    case Knowledge::kWhiteBox: return "white_box";
    case Knowledge::kGrayBox: return "gray_box";
    case Knowledge::kBlackBox: return "black_box";
  }
  return "unknown";
}

Knowledge parse_knowledge(const std::string& s) {
  if (s == "white_box") return Knowledge::kWhiteBox;
  if (s == "gray_box" || s == "grey_box") return Knowledge::kGrayBox;
  if (s == "black_box") return Knowledge::kBlackBox;
  throw WorkflowError("config", "unknown knowledge level '" + s +
                                    "' (expected white_box, gray_box or black_box)");
}

std::map<std::string, std::uint64_t> Seeds::as_map() const {
  return {{"data", data}, {"attack", attack}, {"victim", victim}, {"defense", defense}};
}

// ---------------------------------------------------------------------------
// Config

void WorkflowConfig::validate() const {
  if (knowledge == Knowledge::kBlackBox) {
    throw WorkflowError("config", "black_box knowledge is unimplemented");
  }
  if (knowledge == Knowledge::kGrayBox && !(exposure > 0.0 && exposure <= 1.0)) {
    throw WorkflowError("config", "gray_box exposure must lie in (0, 1]");
  }
  if (knowledge == Knowledge::kWhiteBox && exposure != 1.0) {
    throw WorkflowError("config", "white_box exposes all training data; exposure must be 1");
  }
  if (eval_ks.empty()) throw WorkflowError("config", "eval_ks must not be empty");
  for (std::size_t n = 0; n < eval_ks.size(); ++n) {
    if (eval_ks[n] == 0 || (n > 0 && eval_ks[n] <= eval_ks[n - 1])) {
      throw WorkflowError("config", "eval_ks must be positive and strictly increasing");
    }
  }
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw WorkflowError("config", "split_fraction must lie in (0, 1)");
  }
  if (!(calibration_fraction > 0.0 && calibration_fraction <= 1.0)) {
    throw WorkflowError("config", "calibration_fraction must lie in (0, 1]");
  }
  if (budget.n_fake_users && budget.attack_fraction) {
    throw WorkflowError("config", "set either budget.n_fake_users or budget.attack_fraction");
  }
  if (budget.attack_fraction && !(*budget.attack_fraction > 0.0)) {
    throw WorkflowError("config", "budget.attack_fraction must be positive");
  }
  if (budget.target_items.empty() && budget.n_targets == 0) {
    throw WorkflowError("config", "budget needs target_items or n_targets >= 1");
  }
}

namespace {

nlohmann::json spec_json(const std::optional<ComponentSpec>& s) {
  if (!s) return nullptr;
  return {{"name", s->name}, {"params", s->params}};
}

ComponentSpec parse_section(const nlohmann::json& j, ComponentKind kind,
                            const Registry& registry) {
  const std::string where = to_string(kind);
  if (!j.is_object()) throw WorkflowError("config", where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "name" && key != "params") {
      throw WorkflowError("config", where + ": unknown key '" + key + "'");
    }
  }
  if (!j.contains("name") || !j["name"].is_string()) {
    throw WorkflowError("config", where + ": missing string 'name'");
  }
  try {
    return registry.merge(kind, j["name"].get<std::string>(),
                          j.value("params", nlohmann::json::object()));
  } catch (const RegistryError& e) {
    throw WorkflowError("config", e.what());
  }
}

template <typename T>
std::optional<T> optional_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

}  // namespace

nlohmann::json WorkflowConfig::to_json() const {
  nlohmann::json b = {{"n_fake_users", budget.n_fake_users ? nlohmann::json(*budget.n_fake_users) : nlohmann::json()},
                      {"attack_fraction", budget.attack_fraction ? nlohmann::json(*budget.attack_fraction) : nlohmann::json()},
                      {"filler_size", budget.filler_size ? nlohmann::json(*budget.filler_size) : nlohmann::json()},
                      {"selected_size", budget.selected_size ? nlohmann::json(*budget.selected_size) : nlohmann::json()},
                      {"target_items", budget.target_items},
                      {"n_targets", budget.n_targets}};
  return {{"dataset", spec_json(dataset)},
          {"victim", spec_json(victim)},
          {"attacker", spec_json(attacker)},
          {"defender", spec_json(defender)},
          {"workflow",
           {{"knowledge", to_string(knowledge)},
            {"exposure", exposure},
            {"eval_ks", eval_ks},
            {"seeds", seeds.as_map()},
            {"budget", b},
            {"split_fraction", split_fraction},
            {"calibration_fraction", calibration_fraction},
            {"early_stop_patience", early_stop_patience},
            {"output_dir", output_dir}}}};
}

WorkflowConfig WorkflowConfig::from_json(const nlohmann::json& j, const Registry& registry) {
  if (!j.is_object()) throw WorkflowError("config", "config document must be a JSON object");
  static const std::set<std::string> top = {"dataset", "victim", "attacker", "defender", "workflow"};
  for (const auto& [key, value] : j.items()) {
    if (!top.count(key)) throw WorkflowError("config", "unknown top-level key '" + key + "'");
  }
  if (!j.contains("dataset")) throw WorkflowError("config", "missing 'dataset' section");
  if (!j.contains("victim")) throw WorkflowError("config", "missing 'victim' section");

  WorkflowConfig c;
  c.dataset = parse_section(j["dataset"], ComponentKind::kDataset, registry);
  c.victim = parse_section(j["victim"], ComponentKind::kVictim, registry);
  if (j.contains("attacker") && !j["attacker"].is_null()) {
    c.attacker = parse_section(j["attacker"], ComponentKind::kAttacker, registry);
  }
  if (j.contains("defender") && !j["defender"].is_null()) {
    c.defender = parse_section(j["defender"], ComponentKind::kDefender, registry);
  }

  nlohmann::json w;
  try {
    w = registry.merge(ComponentKind::kWorkflow, "standard",
                       j.value("workflow", nlohmann::json::object()))
            .params;
  } catch (const RegistryError& e) {
    throw WorkflowError("config", e.what());
  }
  try {
    c.knowledge = parse_knowledge(w["knowledge"].get<std::string>());
    c.exposure = w["exposure"].get<double>();
    c.eval_ks = w["eval_ks"].get<std::vector<std::size_t>>();
    c.split_fraction = w["split_fraction"].get<double>();
    c.calibration_fraction = w["calibration_fraction"].get<double>();
    c.early_stop_patience = w["early_stop_patience"].get<std::size_t>();
    c.output_dir = w["output_dir"].get<std::string>();

    static const std::set<std::string> seed_keys = {"data", "attack", "victim", "defense"};
    for (const auto& [key, value] : w["seeds"].items()) {
      if (!seed_keys.count(key)) throw WorkflowError("config", "unknown seed '" + key + "'");
    }
    const auto& s = w["seeds"];
    c.seeds.data = s.value("data", std::uint64_t{0});
    c.seeds.attack = s.value("attack", std::uint64_t{0});
    c.seeds.victim = s.value("victim", std::uint64_t{0});
    c.seeds.defense = s.value("defense", std::uint64_t{0});

    static const std::set<std::string> budget_keys = {"n_fake_users", "attack_fraction",
                                                      "filler_size",  "selected_size",
                                                      "target_items", "n_targets"};
    const auto& b = w["budget"];
    for (const auto& [key, value] : b.items()) {
      if (!budget_keys.count(key)) throw WorkflowError("config", "unknown budget key '" + key + "'");
    }
    c.budget.n_fake_users = optional_field<std::size_t>(b, "n_fake_users");
    c.budget.attack_fraction = optional_field<double>(b, "attack_fraction");
    c.budget.filler_size = optional_field<std::size_t>(b, "filler_size");
    c.budget.selected_size = optional_field<std::size_t>(b, "selected_size");
    c.budget.target_items = b.value("target_items", std::vector<std::string>{});
    c.budget.n_targets = b.value("n_targets", std::size_t{1});
  } catch (const nlohmann::json::exception& e) {
    throw WorkflowError("config", std::string("invalid workflow value: ") + e.what());
  }
  c.validate();
  return c;
}

WorkflowConfig load_workflow_config(const std::filesystem::path& path, const Registry& registry) {
  std::ifstream in(path);
  if (!in) throw WorkflowError("config", path.string() + ": cannot open");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw WorkflowError("config", path.string() + ": " + e.what());
  }
  return WorkflowConfig::from_json(j, registry);
}

// ---------------------------------------------------------------------------
// Hooks

void Hooks::on_epoch(std::string name, EpochHook hook) { epoch_.emplace_back(std::move(name), std::move(hook)); }
void Hooks::on_stage(std::string name, StageHook hook) { stage_.emplace_back(std::move(name), std::move(hook)); }
void Hooks::on_run(std::string name, RunHook hook) { run_.emplace_back(std::move(name), std::move(hook)); }

bool Hooks::fire_epoch(const EpochEvent& e) const {
  bool keep_going = true;
  // Every hook sees every epoch, even after one has asked to stop.
  for (const auto& [name, hook] : epoch_) keep_going = hook(e) && keep_going;
  return keep_going;
}

void Hooks::fire_stage(const StageReport& s) const {
  for (const auto& [name, hook] : stage_) hook(s);
}

void Hooks::fire_run(const WorkflowReport& r) const {
  for (const auto& [name, hook] : run_) hook(r);
}

std::vector<std::string> Hooks::names() const {
  std::vector<std::string> out;
  for (const auto& h : epoch_) out.push_back("post_epoch:" + h.first);
  for (const auto& h : stage_) out.push_back("post_stage:" + h.first);
  for (const auto& h : run_) out.push_back("post_run:" + h.first);
  return out;
}

Hooks::EpochHook early_stop_hook(std::size_t patience) {
  struct State {
    std::string stage;
    double best = 0.0;
    bool seen = false;
    std::size_t stale = 0;
  };
  auto state = std::make_shared<State>();
  return [state, patience](const EpochEvent& e) {
    if (patience == 0) return true;
    if (e.stage != state->stage) *state = State{e.stage};
    double value = 0.0;
    bool lower_is_better = false;
    if (auto it = e.held_out.find("rmse"); it != e.held_out.end()) {
      value = it->second;
      lower_is_better = true;
    } else {
      auto hr = std::find_if(e.held_out.begin(), e.held_out.end(),
                             [](const auto& kv) { return kv.first.rfind("hr@", 0) == 0; });
      if (hr == e.held_out.end()) return true;
      value = hr->second;
    }
    const bool better = !state->seen || (lower_is_better ? value < state->best : value > state->best);
    if (better) {
      state->best = value;
      state->seen = true;
      state->stale = 0;
      return true;
    }
    return ++state->stale < patience;
  };
}

// ---------------------------------------------------------------------------
// Helpers

nlohmann::json LeakageAudit::to_json() const {
  return {{"train_users", train_users},
          {"exposed_users", exposed_users},
          {"attacker_input_users", attacker_input_users},
          {"attacker_input_interactions", attacker_input_interactions},
          {"foreign_interactions", foreign_interactions}};
}

LeakageAudit audit_exposure(const Dataset& train, const std::vector<std::string>& exposed_ids,
                            const Dataset& attacker_input) {
  LeakageAudit a;
  a.train_users = train.n_users();
  a.exposed_users = exposed_ids.size();
  a.attacker_input_users = attacker_input.n_users();
  a.attacker_input_interactions = attacker_input.n_interactions();
  const std::unordered_set<std::string> exposed(exposed_ids.begin(), exposed_ids.end());
  for (const auto& x : attacker_input.interactions()) {
    const auto& uid = attacker_input.user_id(x.user);
    const auto u = train.find_user(uid);
    const auto i = train.find_item(attacker_input.item_id(x.item));
    const bool genuine = exposed.count(uid) && u && i && train.rating(*u, *i) == x.rating;
    if (!genuine) ++a.foreign_interactions;
  }
  return a;
}

Dataset align_to(const Dataset& d, const Dataset& vocab) {
  std::vector<Index> user_map(d.n_users());
  std::vector<bool> user_ok(d.n_users(), false);
  for (Index u = 0; u < d.n_users(); ++u) {
    if (auto v = vocab.find_user(d.user_id(u))) {
      user_map[u] = *v;
      user_ok[u] = true;
    }
  }
  std::vector<Index> item_map(d.n_items());
  std::vector<bool> item_ok(d.n_items(), false);
  for (Index i = 0; i < d.n_items(); ++i) {
    if (auto j = vocab.find_item(d.item_id(i))) {
      item_map[i] = *j;
      item_ok[i] = true;
    }
  }
  std::vector<Interaction> rows;
  for (const auto& x : d.interactions()) {
    if (user_ok[x.user] && item_ok[x.item]) {
      rows.push_back({user_map[x.user], item_map[x.item], x.rating, x.timestamp});
    }
  }
  return Dataset(vocab.user_ids(), vocab.item_ids(), std::move(rows), vocab.provenance(),
                 d.feedback_kind(), d.rating_min(), d.rating_max());
}

std::vector<Index> sample_targets(const Dataset& train, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> degrees(train.n_items());
  for (Index i = 0; i < train.n_items(); ++i) degrees[i] = train.item_degree(i);
  std::vector<std::size_t> sorted = degrees;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  const double median = sorted.size() % 2
                            ? static_cast<double>(sorted[mid])
                            : 0.5 * static_cast<double>(sorted[mid - 1] + sorted[mid]);
  std::vector<Index> pool;
  for (Index i = 0; i < train.n_items(); ++i) {
    if (static_cast<double>(degrees[i]) < median) pool.push_back(i);
  }
  if (pool.size() < n) throw WorkflowError("targets", "not enough below-median-popularity items");
  Rng rng = make_rng(seed, 0x7a7);
  auto chosen = sample_without_replacement(std::move(pool), n, rng);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

AttackBudget resolve_budget(const BudgetConfig& c, const Dataset& train,
                            const std::vector<Index>& targets) {
  const std::size_t real = train.n_users() - train.n_fake_users();
  AttackBudget b;
  if (c.n_fake_users) {
    b.n_fake_users = *c.n_fake_users;
  } else {
    const double fraction = c.attack_fraction.value_or(0.01);
    b.n_fake_users = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(real) - 1e-9));
  }
  const double mean_len =
      real ? static_cast<double>(train.n_interactions()) / static_cast<double>(real) : 0.0;
  b.filler_size = c.filler_size.value_or(static_cast<std::size_t>(std::llround(mean_len)));
  b.selected_size = c.selected_size.value_or(std::max<std::size_t>(1, b.filler_size / 10));
  b.target_items = targets;
  b.rating_min = train.rating_min();
  b.rating_max = train.rating_max();
  return b;
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class RunLog {
 public:
  explicit RunLog(const std::string& dir) {
    if (!dir.empty()) {
      std::filesystem::create_directories(dir);
      out_.open(std::filesystem::path(dir) / "run.log");
      if (!out_) throw WorkflowError("setup", dir + "/run.log: cannot write");
    }
  }
  void line(const std::string& text) {
    if (out_) out_ << utc_now() << ' ' << text << '\n' << std::flush;
  }

 private:
  std::ofstream out_;
};

std::string held_out_text(const std::map<std::string, double>& m) {
  std::string s;
  for (const auto& [k, v] : m) s += ' ' + k + '=' + std::to_string(v);
  return s;
}

struct Trained {
  MFModel model;
  std::vector<double> losses;
  std::map<std::string, double> held_out;
  bool stopped_early = false;
};

class Runner {
 public:
  Runner(const WorkflowConfig& config, const ExecuteOptions& options)
      : config_(config), registry_(options.registry ? *options.registry : Registry::global()),
        hooks_(options.hooks), data_dir_(options.data_dir), log_(config.output_dir) {
    if (config_.early_stop_patience > 0) {
      hooks_.on_epoch("early_stop", early_stop_hook(config_.early_stop_patience));
    }
    hooks_.on_stage("report_after_training", [this](const StageReport& s) {
      log_.line("stage=" + s.name + " event=done" + held_out_text(s.held_out));
    });
  }

  WorkflowReport run();

 private:
  template <typename F>
  void stage(const std::string& name, F&& body) {
    current_ = name;
    log_.line("stage=" + name + " event=start");
    const auto t0 = std::chrono::steady_clock::now();
    body();
    report_.timings[name] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  void finish_stage(StageReport s) {
    hooks_.fire_stage(s);
    report_.stages.push_back(std::move(s));
  }

  nlohmann::json context() const {
    nlohmann::json c = {{"data_seed", config_.seeds.data}};
    if (data_dir_) c["data_dir"] = *data_dir_;
    return c;
  }

  std::shared_ptr<Component> instantiate(const ComponentSpec& spec, const Dataset* data) const;
  Trained train_victim(const std::string& stage_name, const Dataset& train_data);
  StageReport evaluate(const std::string& name, const Trained& t, const Dataset& train_data) const;
  void write_partial();

  const WorkflowConfig& config_;
  const Registry& registry_;
  Hooks hooks_;
  std::optional<std::string> data_dir_;
  RunLog log_;
  WorkflowReport report_;
  std::string current_ = "setup";

  Dataset test_;
  std::vector<Index> targets_;
};

std::shared_ptr<Component> Runner::instantiate(const ComponentSpec& spec,
                                               const Dataset* data) const {
  auto made = registry_.from_config(spec.kind, spec.name, spec.params, context());
  if (auto* live = std::get_if<std::shared_ptr<Component>>(&made)) return *live;
  std::vector<std::shared_ptr<Component>> providers;
  if (data) {
    providers.push_back(std::make_shared<DatasetComponent>(
        ComponentSpec{ComponentKind::kDataset, current_, nlohmann::json::object()}, *data));
  }
  auto resolved = registry_.resolve({std::get<LazyHandle>(made)}, context(), providers);
  return resolved.back();
}

Trained Runner::train_victim(const std::string& stage_name, const Dataset& train_data) {
  auto victim = std::dynamic_pointer_cast<VictimComponent>(instantiate(config_.victim, &train_data));
  const Dataset test = align_to(test_, train_data);
  Trained t{victim->fresh_model(config_.seeds.victim), {}, {}, false};
  FitOptions options = victim->fit_options();
  const std::vector<std::size_t> first_k = {config_.eval_ks.front()};
  options.on_epoch = [&](std::size_t epoch, double loss) {
    EpochEvent e{stage_name, epoch + 1, loss, {}};
    if (!test.empty()) e.held_out = test_step(t.model, test, train_data, first_k);
    log_.line("stage=" + stage_name + " epoch=" + std::to_string(e.epoch) +
              " loss=" + std::to_string(loss) + held_out_text(e.held_out));
    const bool keep = hooks_.fire_epoch(e);
    if (!keep) t.stopped_early = true;
    return keep;
  };
  t.losses = fit(t.model, train_data, options);
  if (!test.empty()) t.held_out = test_step(t.model, test, train_data, config_.eval_ks);
  return t;
}

StageReport Runner::evaluate(const std::string& name, const Trained& t,
                             const Dataset& train_data) const {
  StageReport s;
  s.name = name;
  s.attack_metrics = hit_ratio_at_k(t.model, train_data, targets_, config_.eval_ks);
  s.held_out = t.held_out;
  s.epoch_losses = t.losses;
  s.details["epochs_run"] = t.losses.size();
  s.details["stopped_early"] = t.stopped_early;
  s.details["train_users"] = train_data.n_users();
  s.details["train_interactions"] = train_data.n_interactions();
  return s;
}

void Runner::write_partial() {
  if (config_.output_dir.empty()) return;
  try {
    write_report(report_, config_.output_dir);
  } catch (const std::exception&) {
    // The original failure is more useful than a secondary I/O error.
  }
}

WorkflowReport Runner::run() {
  report_.config = config_.to_json();
  report_.seeds = config_.seeds.as_map();
  report_.log_path = config_.output_dir.empty() ? "" : "run.log";
  report_.components = {{"library", std::string("shillbench ") + kVersion},
                        {"dataset", config_.dataset.name},
                        {"victim", config_.victim.name},
                        {"attacker", config_.attacker ? nlohmann::json(config_.attacker->name) : nlohmann::json()},
                        {"defender", config_.defender ? nlohmann::json(config_.defender->name) : nlohmann::json()},
                        {"hooks", hooks_.names()}};
  report_.protocol = {
      {"hr_pool", "real users with no training interaction with the target"},
      {"hr_exclusion", "each user's training items are excluded from the ranking"},
      {"hr_average", "equal weight over targets with a nonempty pool"},
      {"target_policy", config_.budget.target_items.empty()
                            ? "seeded sample of below-median-popularity training items"
                            : "configured target items"},
      {"exposure", "whole user profiles sampled from the training split"},
      {"victim_training", "from scratch for every stage with the victim seed"},
      {"split", "per-user ratio split"}};

  try {
    Dataset data;
    stage("load", [&] {
      auto component = std::dynamic_pointer_cast<DatasetComponent>(instantiate(config_.dataset, nullptr));
      data = component->data();
      if (data.n_fake_users() > 0) throw DataError("source dataset already contains fake users");
    });

    Dataset train;
    stage("split", [&] {
      auto parts = split(data, {SplitStrategy::kRatio, config_.split_fraction, config_.seeds.data});
      train = std::move(parts.train);
      test_ = std::move(parts.test);
      if (config_.budget.target_items.empty()) {
        targets_ = sample_targets(train, config_.budget.n_targets, config_.seeds.attack);
      } else {
        for (const auto& id : config_.budget.target_items) {
          auto i = train.find_item(id);
          if (!i) throw DataError("target item '" + id + "' is not in the catalog");
          targets_.push_back(*i);
        }
      }
    });

    stage("baseline", [&] {
      const Trained t = train_victim("baseline", train);
      StageReport s = evaluate("baseline", t, train);
      s.details["dataset"] = info_describe(data);
      nlohmann::json ids = nlohmann::json::array();
      for (Index i : targets_) ids.push_back(train.item_id(i));
      s.details["targets"] = ids;
      finish_stage(std::move(s));
    });

    Dataset poisoned = train;
    std::optional<AttackBudget> budget;
    std::shared_ptr<AttackerComponent> attacker;
    if (config_.attacker) {
      Dataset exposed;
      stage("expose", [&] {
        exposed = config_.knowledge == Knowledge::kWhiteBox
                      ? train
                      : expose_fraction(train, config_.exposure, config_.seeds.attack);
      });

      FakeProfiles fakes;
      stage("attack", [&] {
        attacker = std::dynamic_pointer_cast<AttackerComponent>(
            instantiate(*config_.attacker, &exposed));
        budget = resolve_budget(config_.budget, train, targets_);
        budget->validate(train.n_items(), 0);
        fakes = attacker->generate_fake(exposed, *budget, config_.seeds.attack);
        const LeakageAudit audit = audit_exposure(train, exposed.user_ids(), exposed);
        if (audit.foreign_interactions != 0) {
          throw WorkflowError("attack", "attacker input contains interactions outside the exposed users");
        }
        StageReport s;
        s.name = "attack";
        s.details["knowledge"] = to_string(config_.knowledge);
        s.details["exposure"] = config_.exposure;
        s.details["exposed_users"] = exposed.n_users();
        s.details["leakage_audit"] = audit.to_json();
        s.details["budget"] = *budget;
        s.details["n_fake_users"] = fakes.size();
        s.details["n_fake_ratings"] = fakes.n_ratings();
        finish_stage(std::move(s));
      });

      stage("inject", [&] { poisoned = inject_data(train, fakes); });
    }

    if (!config_.attacker && !same_triples(poisoned, train)) {
      throw WorkflowError("inject", "pipeline identity violated without an attacker");
    }

    std::optional<FilterOutcome> filtered;
    if (config_.defender) {
      auto defender = std::dynamic_pointer_cast<DefenderComponent>(instantiate(*config_.defender, &poisoned));
      std::optional<Dataset> labeled;
      if (defender->needs_labels()) {
        stage("calibrate", [&] {
          // Labeled calibration data: a seeded sample of training users plus
          // fakes from the configured attacker (random when none is set).
          const auto n_sample = std::max<std::size_t>(
              1, static_cast<std::size_t>(std::ceil(config_.calibration_fraction *
                                                    static_cast<double>(train.n_users()) - 1e-9)));
          std::vector<Index> all(train.n_users());
          std::iota(all.begin(), all.end(), Index{0});
          Rng rng = make_rng(config_.seeds.defense, 0xca1);
          auto chosen = sample_without_replacement(std::move(all), n_sample, rng);
          std::sort(chosen.begin(), chosen.end());
          const Dataset sample = select_users(train, chosen);
          AttackBudget cal_budget = budget ? *budget : resolve_budget(config_.budget, train, targets_);
          ComponentSpec cal_spec = config_.attacker
                                       ? *config_.attacker
                                       : registry_.merge(ComponentKind::kAttacker, "random", {});
          auto cal_attacker = std::dynamic_pointer_cast<AttackerComponent>(instantiate(cal_spec, &sample));
          const FakeProfiles cal_fakes =
              cal_attacker->generate_fake(sample, cal_budget, mix_seed(config_.seeds.defense, 0xca2));
          labeled = inject_data(sample, cal_fakes);
          StageReport s;
          s.name = "calibrate";
          s.details["real_users"] = sample.n_users();
          s.details["fake_users"] = cal_fakes.size();
          s.details["attacker"] = cal_spec.name;
          s.details["rule"] =
              "seeded sample of training users plus freshly generated fakes, disjoint from the injected ones";
          finish_stage(std::move(s));
        });
      }
      stage("defend", [&] {
        const std::optional<std::size_t> expected =
            budget ? std::optional<std::size_t>(budget->n_fake_users) : std::nullopt;
        filtered = defender->generate_filter(poisoned, labeled ? &*labeled : nullptr, expected,
                                             config_.seeds.defense);
        StageReport s;
        s.name = "defense";
        s.detection_metrics = detection_metrics(filtered->result, poisoned);
        s.details["detector"] = config_.defender->name;
        s.details["flagged"] = filtered->flagged.size();
        s.details["remaining_users"] = filtered->filtered.n_users();
        report_.detection = filtered->result;
        finish_stage(std::move(s));
      });
    }

    if (config_.attacker) {
      stage("post_attack", [&] {
        finish_stage(evaluate("post_attack", train_victim("post_attack", poisoned), poisoned));
      });
    }
    if (filtered) {
      stage("post_defense", [&] {
        finish_stage(evaluate("post_defense", train_victim("post_defense", filtered->filtered),
                              filtered->filtered));
      });
    }
  } catch (const WorkflowError& e) {
    report_.status = "failed";
    report_.failed_stage = e.stage();
    report_.error = e.what();
    log_.line("stage=" + e.stage() + " event=failed error=" + e.what());
    write_partial();
    throw;
  } catch (const std::exception& e) {
    report_.status = "failed";
    report_.failed_stage = current_;
    report_.error = e.what();
    log_.line("stage=" + current_ + " event=failed error=" + e.what());
    write_partial();
    throw WorkflowError(current_, e.what());
  }

  current_ = "report";
  hooks_.fire_run(report_);
  if (!config_.output_dir.empty()) {
    try {
      write_report(report_, config_.output_dir);
    } catch (const std::exception& e) {
      throw WorkflowError("report", e.what());
    }
  }
  log_.line("stage=report event=done");
  return report_;
}

}  // namespace

WorkflowReport execute(const WorkflowConfig& config, const ExecuteOptions& options) {
  config.validate();
  Runner runner(config, options);
  return runner.run();
}

}  // namespace shillbench
