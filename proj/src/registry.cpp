#include "shillbench/registry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>

#include "shillbench/synthetic.hpp"

namespace shillbench {

std::string to_string(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::kDataset: return "dataset";
    case ComponentKind::kVictim: return "victim";
    case ComponentKind::kAttacker: return "attacker";
    case ComponentKind::kDefender: return "defender";
    case ComponentKind::kWorkflow: return "workflow";
  }
  return "unknown";
}

ComponentKind parse_component_kind(const std::string& s) {
  for (auto k : {ComponentKind::kDataset, ComponentKind::kVictim, ComponentKind::kAttacker,
                 ComponentKind::kDefender, ComponentKind::kWorkflow}) {
    if (to_string(k) == s) return k;
  }
  throw RegistryError("unknown component kind '" + s +
                      "' (expected dataset, victim, attacker, defender or workflow)");
}

namespace {

std::string label(ComponentKind kind, const std::string& name) {
  return to_string(kind) + " '" + name + "'";
}

// Instantiation order when several lazy components are ready at once.
int resolve_rank(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::kDataset: return 0;
    case ComponentKind::kAttacker: return 1;
    case ComponentKind::kDefender: return 2;
    case ComponentKind::kVictim: return 3;
    case ComponentKind::kWorkflow: return 4;
  }
  return 5;
}

bool type_compatible(const nlohmann::json& def, const nlohmann::json& v) {
  if (def.is_null()) return true;
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_integer()) {
    if (!v.is_number_integer()) return false;
    return def.get<long long>() < 0 || v.is_number_unsigned() || v.get<long long>() >= 0;
  }
  if (def.is_number()) return v.is_number();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  if (def.is_object()) return v.is_object();
  return false;
}

std::string json_type(const nlohmann::json& v) {
  if (v.is_number_integer() && v.get<long long>() >= 0) return "nonnegative integer";
  return v.type_name();
}

}  // namespace

// ---------------------------------------------------------------------------
// Components

nlohmann::json Component::info_describe() const {
  nlohmann::json j = spec_.params;
  j["component"] = to_string(spec_.kind);
  j["name"] = spec_.name;
  return j;
}

nlohmann::json info_describe(const Component& c) { return c.info_describe(); }

DatasetComponent::DatasetComponent(ComponentSpec spec, Dataset data)
    : Component(std::move(spec)), data_(std::move(data)) {}

nlohmann::json DatasetComponent::info_describe() const {
  nlohmann::json j = shillbench::info_describe(data_);
  j["component"] = "dataset";
  j["name"] = spec().name;
  return j;
}

VictimComponent::VictimComponent(ComponentSpec spec, ModelKind kind, TrainConfig config,
                                 FitOptions fit, std::size_t n_users, std::size_t n_items)
    : Component(std::move(spec)), kind_(kind), config_(config), fit_(std::move(fit)),
      n_users_(n_users), n_items_(n_items) {
  config_.validate();
  if (n_users_ == 0 || n_items_ == 0) throw RegistryError("victim needs n_users and n_items > 0");
}

MFModel VictimComponent::fresh_model(std::uint64_t seed) const {
  TrainConfig c = config_;
  c.seed = seed;
  return init_model(c, n_users_, n_items_, kind_);
}

nlohmann::json VictimComponent::info_describe() const {
  nlohmann::json j = Component::info_describe();
  j["kind"] = to_string(kind_);
  j["n_users"] = n_users_;
  j["n_items"] = n_items_;
  return j;
}

AttackerComponent::AttackerComponent(ComponentSpec spec, Generator generate, double rating_min,
                                     double rating_max)
    : Component(std::move(spec)), generate_(std::move(generate)), rating_min_(rating_min),
      rating_max_(rating_max) {}

FakeProfiles AttackerComponent::generate_fake(const Dataset& exposed, AttackBudget budget,
                                              std::uint64_t seed) const {
  budget.rating_min = rating_min_;
  budget.rating_max = rating_max_;
  return generate_(exposed, budget, seed);
}

nlohmann::json AttackerComponent::info_describe() const {
  nlohmann::json j = Component::info_describe();
  j["rating_min"] = rating_min_;
  j["rating_max"] = rating_max_;
  return j;
}

bool DefenderComponent::needs_labels() const {
  return spec().name == "degree_sad" || spec().name == "semi_sad";
}

FilterOutcome DefenderComponent::generate_filter(const Dataset& d, const Dataset* labeled,
                                                 std::optional<std::size_t> expected_fakes,
                                                 std::uint64_t seed) const {
  DetectorSpec ds;
  ds.name = spec().name;
  ds.params = spec().params;
  ds.labeled = labeled;
  ds.expected_fakes = expected_fakes;
  ds.seed = seed;
  return shillbench::generate_filter(ds, d);
}

nlohmann::json DefenderComponent::info_describe() const {
  nlohmann::json j = Component::info_describe();
  j["needs_labels"] = needs_labels();
  return j;
}

// ---------------------------------------------------------------------------
// Registry

void Registry::register_component(ComponentKind kind, const std::string& name,
                                  ComponentEntry entry) {
  if (name.empty()) throw RegistryError("component name must not be empty");
  if (!entry.defaults.is_object()) throw RegistryError(label(kind, name) + ": defaults must be an object");
  if (!entry.build) throw RegistryError(label(kind, name) + ": no constructor");
  const auto key = std::make_pair(kind, name);
  if (entries_.count(key)) throw RegistryError(label(kind, name) + " is already registered");
  entries_.emplace(key, std::move(entry));
}

std::vector<std::string> Registry::list(ComponentKind kind) const {
  std::vector<std::string> names;
  for (const auto& [key, entry] : entries_) {
    if (key.first == kind) names.push_back(key.second);
  }
  return names;  // map order is already sorted by name
}

bool Registry::contains(ComponentKind kind, const std::string& name) const {
  return entries_.count({kind, name}) > 0;
}

const ComponentEntry& Registry::entry(ComponentKind kind, const std::string& name) const {
  auto it = entries_.find({kind, name});
  if (it == entries_.end()) throw RegistryError("unknown component: " + label(kind, name));
  return it->second;
}

const nlohmann::json& Registry::defaults(ComponentKind kind, const std::string& name) const {
  return entry(kind, name).defaults;
}

ComponentSpec Registry::merge(ComponentKind kind, const std::string& name,
                              const nlohmann::json& overrides) const {
  const ComponentEntry& e = entry(kind, name);
  ComponentSpec spec{kind, name, e.defaults};
  if (overrides.is_null()) return spec;
  if (!overrides.is_object()) throw RegistryError(label(kind, name) + ": overrides must be an object");
  for (const auto& [key, value] : overrides.items()) {
    if (!e.defaults.contains(key)) {
      throw RegistryError(label(kind, name) + ": unknown parameter '" + key + "'");
    }
    if (!type_compatible(e.defaults[key], value)) {
      throw RegistryError(label(kind, name) + ": parameter '" + key + "' expects " +
                          json_type(e.defaults[key]) + ", got " + value.dump());
    }
    spec.params[key] = value;
  }
  return spec;
}

Constructed Registry::from_config(ComponentKind kind, const std::string& name,
                                  const nlohmann::json& overrides,
                                  const nlohmann::json& context) const {
  ComponentSpec spec = merge(kind, name, overrides);
  const ComponentEntry& e = entry(kind, name);
  LazyHandle handle{spec, {}};
  nlohmann::json runtime = nlohmann::json::object();
  for (const auto& key : e.runtime) {
    if (context.is_object() && context.contains(key)) {
      runtime[key] = context[key];
    } else {
      handle.missing.push_back(key);
    }
  }
  if (!handle.missing.empty()) return handle;
  for (const auto& key : e.optional_runtime) {
    if (context.is_object() && context.contains(key)) runtime[key] = context[key];
  }
  return e.build(spec, runtime);
}

std::vector<std::shared_ptr<Component>> Registry::resolve(
    const std::vector<LazyHandle>& handles, const nlohmann::json& context,
    const std::vector<std::shared_ptr<Component>>& live) const {
  std::vector<std::shared_ptr<Component>> out = live;
  if (handles.empty()) return out;

  std::vector<nlohmann::json> live_info;
  for (const auto& c : live) live_info.push_back(c->info_describe());
  auto static_source = [&](const std::string& key) {
    if (context.is_object() && context.contains(key)) return true;
    return std::any_of(live_info.begin(), live_info.end(),
                       [&](const nlohmann::json& j) { return j.contains(key); });
  };

  // Edges provider -> consumer between handles.
  const std::size_t n = handles.size();
  std::vector<std::set<std::size_t>> consumers(n);
  std::vector<std::size_t> indegree(n, 0);
  for (std::size_t h = 0; h < n; ++h) {
    const ComponentEntry& e = entry(handles[h].spec.kind, handles[h].spec.name);
    (void)e;
    for (const auto& key : handles[h].missing) {
      if (static_source(key)) continue;
      std::optional<std::size_t> provider;
      for (std::size_t p = 0; p < n; ++p) {
        if (p == h) continue;
        const auto& prov = entry(handles[p].spec.kind, handles[p].spec.name).provides;
        if (std::find(prov.begin(), prov.end(), key) == prov.end()) continue;
        if (!provider || resolve_rank(handles[p].spec.kind) < resolve_rank(handles[*provider].spec.kind)) {
          provider = p;
        }
      }
      if (!provider) {
        throw RegistryError("cannot resolve " + label(handles[h].spec.kind, handles[h].spec.name) +
                            ": no provider for parameter '" + key + "'");
      }
      if (consumers[*provider].insert(h).second) ++indegree[h];
    }
  }

  std::vector<std::size_t> order;
  std::vector<bool> done(n, false);
  while (order.size() < n) {
    std::optional<std::size_t> next;
    for (std::size_t h = 0; h < n; ++h) {
      if (done[h] || indegree[h] != 0) continue;
      if (!next || resolve_rank(handles[h].spec.kind) < resolve_rank(handles[*next].spec.kind)) next = h;
    }
    if (!next) {
      std::string members;
      for (std::size_t h = 0; h < n; ++h) {
        if (!done[h]) members += (members.empty() ? "" : ", ") + label(handles[h].spec.kind, handles[h].spec.name);
      }
      throw RegistryError("dependency cycle among " + members);
    }
    done[*next] = true;
    order.push_back(*next);
    for (std::size_t c : consumers[*next]) --indegree[c];
  }

  std::vector<nlohmann::json> known = live_info;
  for (std::size_t h : order) {
    const LazyHandle& handle = handles[h];
    const ComponentEntry& e = entry(handle.spec.kind, handle.spec.name);
    nlohmann::json runtime = nlohmann::json::object();
    for (const auto& key : e.runtime) {
      if (context.is_object() && context.contains(key)) {
        runtime[key] = context[key];
        continue;
      }
      for (const auto& info : known) {
        if (info.contains(key)) {
          runtime[key] = info[key];
          break;
        }
      }
      if (!runtime.contains(key)) {
        throw RegistryError("cannot resolve " + label(handle.spec.kind, handle.spec.name) +
                            ": no provider for parameter '" + key + "'");
      }
    }
    for (const auto& key : e.optional_runtime) {
      if (context.is_object() && context.contains(key)) runtime[key] = context[key];
    }
    auto component = e.build(handle.spec, runtime);
    known.push_back(component->info_describe());
    out.push_back(std::move(component));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Built-ins

std::filesystem::path resolve_data_path(const std::string& path,
                                        const std::optional<std::string>& data_dir) {
  std::filesystem::path p(path);
  if (p.is_absolute()) return p;
  if (data_dir && !data_dir->empty()) return std::filesystem::path(*data_dir) / p;
  if (const char* env = std::getenv("SHILLBENCH_DATA_DIR"); env && *env) {
    return std::filesystem::path(env) / p;
  }
  return p;
}

namespace {

nlohmann::json preprocessing_defaults() {
  return {{"kcore", 0}, {"binarize_threshold", nullptr}};
}

Dataset preprocess(Dataset d, const nlohmann::json& params) {
  const auto k = params.at("kcore").get<std::size_t>();
  if (k > 0) d = preprocess_kcore(d, k);
  const auto& threshold = params.at("binarize_threshold");
  if (!threshold.is_null()) {
    if (!threshold.is_number()) throw RegistryError("binarize_threshold must be a number or null");
    d = binarize(d, threshold.get<double>());
  }
  return d;
}

std::optional<std::string> context_data_dir(const nlohmann::json& runtime) {
  if (runtime.contains("data_dir") && runtime["data_dir"].is_string()) {
    return runtime["data_dir"].get<std::string>();
  }
  return std::nullopt;
}

// Relative paths that do not resolve get a hint about the data root.
Dataset load_rooted(const std::string& path, const nlohmann::json& runtime, const CsvSchema& schema,
                    FeedbackKind kind) {
  const auto resolved = resolve_data_path(path, context_data_dir(runtime));
  if (!std::filesystem::exists(resolved) && std::filesystem::path(path).is_relative()) {
    throw DataError(resolved.string() +
                    ": file not found (relative dataset paths resolve against "
                    "SHILLBENCH_DATA_DIR, else the working directory)");
  }
  return load_csv(resolved, schema, kind);
}

nlohmann::json with_preprocessing(nlohmann::json j) {
  j.update(preprocessing_defaults());
  return j;
}

void add_datasets(Registry& r) {
  const std::vector<std::string> dataset_info = {"n_users", "n_items", "n_interactions",
                                                 "rating_min", "rating_max"};
  r.register_component(
      ComponentKind::kDataset, "csv",
      {with_preprocessing({{"path", ""},
                           {"column_map", ""},
                           {"delimiter", ","},
                           {"has_header", true},
                           {"feedback", "explicit"}}),
       {},
       {"data_dir"},
       dataset_info,
       [](const ComponentSpec& spec, const nlohmann::json& runtime) {
         const auto& p = spec.params;
         const auto path = p.at("path").get<std::string>();
         if (path.empty()) throw RegistryError("dataset 'csv' needs a path");
         CsvSchema schema;
         const auto map = p.at("column_map").get<std::string>();
         if (!map.empty()) schema = CsvSchema::from_column_map(map);
         schema.delimiter = p.at("delimiter").get<std::string>();
         schema.has_header = p.at("has_header").get<bool>();
         Dataset d = load_rooted(path, runtime, schema,
                                 parse_feedback_kind(p.at("feedback").get<std::string>()));
         return std::make_shared<DatasetComponent>(spec, preprocess(std::move(d), p));
       }});

  r.register_component(
      ComponentKind::kDataset, "movielens_1m",
      {{{"path", "ml-1m/ratings.dat"}, {"kcore", 10}, {"binarize_threshold", nullptr}},
       {},
       {"data_dir"},
       dataset_info,
       [](const ComponentSpec& spec, const nlohmann::json& runtime) {
         CsvSchema schema;
         schema.user_col = "#0";
         schema.item_col = "#1";
         schema.rating_col = "#2";
         schema.timestamp_col = "#3";
         schema.delimiter = "::";
         schema.has_header = false;
         schema.rating_range = std::make_pair(1.0, 5.0);
         Dataset d = load_rooted(spec.params.at("path").get<std::string>(), runtime, schema,
                                 FeedbackKind::kExplicit);
         return std::make_shared<DatasetComponent>(spec, preprocess(std::move(d), spec.params));
       }});

  r.register_component(
      ComponentKind::kDataset, "synthetic_skewed",
      {with_preprocessing([] {
         nlohmann::json j = SkewedSpec{};
         j.erase("seed");
         return j;
       }()),
       {"data_seed"},
       {},
       dataset_info,
       [](const ComponentSpec& spec, const nlohmann::json& runtime) {
         const auto& p = spec.params;
         SkewedSpec s;
         s.n_users = p.at("n_users").get<std::size_t>();
         s.n_items = p.at("n_items").get<std::size_t>();
         s.rank = p.at("rank").get<std::size_t>();
         s.zipf_exponent = p.at("zipf_exponent").get<double>();
         s.median_profile = p.at("median_profile").get<double>();
         s.profile_spread = p.at("profile_spread").get<double>();
         s.min_profile = p.at("min_profile").get<std::size_t>();
         s.mean_rating = p.at("mean_rating").get<double>();
         s.noise_sigma = p.at("noise_sigma").get<double>();
         s.seed = runtime.at("data_seed").get<std::uint64_t>();
         return std::make_shared<DatasetComponent>(spec, preprocess(make_skewed(s), p));
       }});

  r.register_component(
      ComponentKind::kDataset, "synthetic_low_rank",
      {with_preprocessing([] {
         nlohmann::json j = LowRankSpec{};
         j.erase("seed");
         return j;
       }()),
       {"data_seed"},
       {},
       dataset_info,
       [](const ComponentSpec& spec, const nlohmann::json& runtime) {
         const auto& p = spec.params;
         LowRankSpec s;
         s.n_users = p.at("n_users").get<std::size_t>();
         s.n_items = p.at("n_items").get<std::size_t>();
         s.rank = p.at("rank").get<std::size_t>();
         s.noise_sigma = p.at("noise_sigma").get<double>();
         s.factor_scale = p.at("factor_scale").get<double>();
         s.offset = p.at("offset").get<double>();
         s.seed = runtime.at("data_seed").get<std::uint64_t>();
         return std::make_shared<DatasetComponent>(spec, preprocess(make_low_rank(s), p));
       }});
}

void add_victims(Registry& r) {
  const nlohmann::json defaults = [] {
    nlohmann::json j = TrainConfig{};
    j.erase("seed");
    j["batch_size"] = 256;
    j["negatives_per_positive"] = 1;
    return j;
  }();
  for (auto kind : {ModelKind::kExplicit, ModelKind::kPairwise}) {
    r.register_component(
        ComponentKind::kVictim, kind == ModelKind::kExplicit ? "mf_explicit" : "mf_bpr",
        {defaults,
         {"n_users", "n_items"},
         {},
         {"latent_dim", "kind", "n_users", "n_items"},
         [kind](const ComponentSpec& spec, const nlohmann::json& runtime) {
           nlohmann::json c = spec.params;
           c.erase("batch_size");
           c.erase("negatives_per_positive");
           c["seed"] = 0;
           TrainConfig config = c.get<TrainConfig>();
           FitOptions fit;
           fit.batch_size = spec.params.at("batch_size").get<std::size_t>();
           fit.negatives_per_positive = spec.params.at("negatives_per_positive").get<std::size_t>();
           return std::make_shared<VictimComponent>(spec, kind, config, fit,
                                                    runtime.at("n_users").get<std::size_t>(),
                                                    runtime.at("n_items").get<std::size_t>());
         }});
  }
}

using HeuristicFn = FakeProfiles (*)(const DatasetStats&, const AttackBudget&, std::uint64_t);

void add_attackers(Registry& r) {
  const std::vector<std::string> runtime = {"rating_min", "rating_max"};
  const std::vector<std::string> provides = {"rating_min", "rating_max"};
  const std::vector<std::pair<std::string, HeuristicFn>> heuristics = {
      {"random", &random_attack}, {"average", &average_attack}, {"bandwagon", &bandwagon_attack}};
  for (const auto& [name, fn] : heuristics) {
    r.register_component(
        ComponentKind::kAttacker, name,
        {nlohmann::json::object(), runtime, {}, provides,
         [fn = fn](const ComponentSpec& spec, const nlohmann::json& rt) {
           return std::make_shared<AttackerComponent>(
               spec,
               [fn](const Dataset& exposed, const AttackBudget& budget, std::uint64_t seed) {
                 return fn(compute_stats(exposed), budget, seed);
               },
               rt.at("rating_min").get<double>(), rt.at("rating_max").get<double>());
         }});
  }

  r.register_component(
      ComponentKind::kAttacker, "segment",
      {{{"segment", nlohmann::json::array()}, {"segment_size", 10}},
       runtime,
       {},
       provides,
       [](const ComponentSpec& spec, const nlohmann::json& rt) {
         const auto ids = spec.params.at("segment").get<std::vector<std::string>>();
         const auto size = spec.params.at("segment_size").get<std::size_t>();
         return std::make_shared<AttackerComponent>(
             spec,
             [ids, size](const Dataset& exposed, const AttackBudget& budget, std::uint64_t seed) {
               std::vector<Index> segment;
               if (ids.empty()) {
                 if (budget.target_items.empty()) throw AttackError("segment attack needs a target");
                 // Co-rating neighbourhood of the first target, minus every target.
                 for (Index i : co_rating_segment(exposed, budget.target_items.front(),
                                                  size + budget.target_items.size())) {
                   if (std::find(budget.target_items.begin(), budget.target_items.end(), i) ==
                       budget.target_items.end()) {
                     segment.push_back(i);
                   }
                 }
                 if (segment.size() > size) segment.resize(size);
               } else {
                 for (const auto& id : ids) {
                   const auto i = exposed.find_item(id);
                   if (!i) throw AttackError("segment item '" + id + "' is not in the catalog");
                   segment.push_back(*i);
                 }
               }
               return segment_attack(compute_stats(exposed), budget, segment, seed);
             },
             rt.at("rating_min").get<double>(), rt.at("rating_max").get<double>());
       }});

  r.register_component(
      ComponentKind::kAttacker, "pga",
      {{{"outer_iters", 10},
        {"step_size", 10.0},
        {"surrogate_latent_dim", 8},
        {"surrogate_reg_lambda", 0.1},
        {"surrogate_sweeps", 10},
        {"surrogate_init_scale", 0.1}},
       runtime,
       {},
       provides,
       [](const ComponentSpec& spec, const nlohmann::json& rt) {
         const auto& p = spec.params;
         TrainConfig surrogate;
         surrogate.latent_dim = p.at("surrogate_latent_dim").get<std::size_t>();
         surrogate.reg_lambda = p.at("surrogate_reg_lambda").get<double>();
         surrogate.epochs = p.at("surrogate_sweeps").get<std::size_t>();
         surrogate.init_scale = p.at("surrogate_init_scale").get<double>();
         surrogate.validate();
         PgaOptions options;
         options.outer_iters = p.at("outer_iters").get<std::size_t>();
         options.step_size = p.at("step_size").get<double>();
         return std::make_shared<AttackerComponent>(
             spec,
             [surrogate, options](const Dataset& exposed, const AttackBudget& budget,
                                  std::uint64_t seed) {
               TrainConfig s = surrogate;
               s.seed = seed;
               PgaOptions o = options;
               o.seed = seed;
               return pga_attack(exposed, budget, s, o);
             },
             rt.at("rating_min").get<double>(), rt.at("rating_max").get<double>());
       }});
}

void add_defenders(Registry& r) {
  for (const auto& name : detector_names()) {
    r.register_component(ComponentKind::kDefender, name,
                         {detector_defaults(name),
                          {},
                          {},
                          {"needs_labels"},
                          [](const ComponentSpec& spec, const nlohmann::json&) {
                            return std::make_shared<DefenderComponent>(spec);
                          }});
  }
}

void add_workflows(Registry& r) {
  r.register_component(ComponentKind::kWorkflow, "standard",
                       {{{"knowledge", "white_box"},
                         {"exposure", 1.0},
                         {"eval_ks", {10, 20, 50, 100}},
                         {"seeds", nlohmann::json::object()},
                         {"budget", nlohmann::json::object()},
                         {"split_fraction", 0.8},
                         {"calibration_fraction", 0.2},
                         {"early_stop_patience", 5},
                         {"output_dir", ""}},
                        {},
                        {},
                        {"knowledge", "exposure", "eval_ks"},
                        [](const ComponentSpec& spec, const nlohmann::json&) {
                          return std::make_shared<Component>(spec);
                        }});
}

}  // namespace

Registry Registry::with_builtins() {
  Registry r;
  add_datasets(r);
  add_victims(r);
  add_attackers(r);
  add_defenders(r);
  add_workflows(r);
  return r;
}

Registry& Registry::global() {
  static Registry registry = with_builtins();
  return registry;
}

}  // namespace shillbench
