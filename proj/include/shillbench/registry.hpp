#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "shillbench/attackers.hpp"
#include "shillbench/dataset.hpp"
#include "shillbench/detectors.hpp"
#include "shillbench/mf_model.hpp"

namespace shillbench {

class RegistryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ComponentKind { kDataset, kVictim, kAttacker, kDefender, kWorkflow };

std::string to_string(ComponentKind kind);
ComponentKind parse_component_kind(const std::string& s);

struct ComponentSpec {
  ComponentKind kind = ComponentKind::kDataset;
  std::string name;
  nlohmann::json params = nlohmann::json::object();
};

/// A fully parameterized, live component.
class Component {
 public:
  explicit Component(ComponentSpec spec) : spec_(std::move(spec)) {}
  virtual ~Component() = default;

  const ComponentSpec& spec() const { return spec_; }
  /// Public named values other components may depend on.
  virtual nlohmann::json info_describe() const;

 private:
  ComponentSpec spec_;
};

class DatasetComponent : public Component {
 public:
  DatasetComponent(ComponentSpec spec, Dataset data);
  const Dataset& data() const { return data_; }
  nlohmann::json info_describe() const override;

 private:
  Dataset data_;
};

class VictimComponent : public Component {
 public:
  VictimComponent(ComponentSpec spec, ModelKind kind, TrainConfig config, FitOptions fit,
                  std::size_t n_users, std::size_t n_items);

  ModelKind kind() const { return kind_; }
  const TrainConfig& config() const { return config_; }
  const FitOptions& fit_options() const { return fit_; }
  /// Freshly initialized model with the given seed; training always starts here.
  MFModel fresh_model(std::uint64_t seed) const;
  nlohmann::json info_describe() const override;

 private:
  ModelKind kind_;
  TrainConfig config_;
  FitOptions fit_;
  std::size_t n_users_;
  std::size_t n_items_;
};

class AttackerComponent : public Component {
 public:
  using Generator = std::function<FakeProfiles(const Dataset& exposed, const AttackBudget&,
                                               std::uint64_t seed)>;

  AttackerComponent(ComponentSpec spec, Generator generate, double rating_min,
                    double rating_max);
  /// Reads nothing beyond `exposed`; the budget's rating range is overwritten
  /// with the one this attacker was resolved against.
  FakeProfiles generate_fake(const Dataset& exposed, AttackBudget budget,
                             std::uint64_t seed) const;
  nlohmann::json info_describe() const override;

 private:
  Generator generate_;
  double rating_min_;
  double rating_max_;
};

class DefenderComponent : public Component {
 public:
  explicit DefenderComponent(ComponentSpec spec) : Component(std::move(spec)) {}
  /// True for detectors trained on labeled calibration data.
  bool needs_labels() const;
  FilterOutcome generate_filter(const Dataset& d, const Dataset* labeled,
                                std::optional<std::size_t> expected_fakes,
                                std::uint64_t seed) const;
  nlohmann::json info_describe() const override;
};

/// A component whose runtime parameters are not known yet.
struct LazyHandle {
  ComponentSpec spec;
  std::vector<std::string> missing;
};

using Constructed = std::variant<std::shared_ptr<Component>, LazyHandle>;

struct ComponentEntry {
  nlohmann::json defaults = nlohmann::json::object();
  /// Values supplied at instantiation from the context or another component.
  std::vector<std::string> runtime;
  /// Context values passed through when present but never required.
  std::vector<std::string> optional_runtime;
  /// Keys this component's info_describe always exposes.
  std::vector<std::string> provides;
  std::function<std::shared_ptr<Component>(const ComponentSpec&, const nlohmann::json& runtime)>
      build;
};

/// Component table keyed by (kind, name) with the default hyper-parameters.
/// Lookups are safe to share across threads once registration is finished.
class Registry {
 public:
  /// Registry preloaded with every built-in component.
  static Registry with_builtins();
  /// Process-wide registry, initialized with the built-ins on first use.
  static Registry& global();

  void register_component(ComponentKind kind, const std::string& name, ComponentEntry entry);
  std::vector<std::string> list(ComponentKind kind) const;
  bool contains(ComponentKind kind, const std::string& name) const;
  const ComponentEntry& entry(ComponentKind kind, const std::string& name) const;
  const nlohmann::json& defaults(ComponentKind kind, const std::string& name) const;

  /// Defaults overlaid with `overrides`. Rejects unknown keys and values whose
  /// JSON type does not match the default.
  ComponentSpec merge(ComponentKind kind, const std::string& name,
                      const nlohmann::json& overrides) const;

  /// Live component when `context` covers every runtime parameter, else a
  /// handle naming the missing ones.
  Constructed from_config(ComponentKind kind, const std::string& name,
                          const nlohmann::json& overrides,
                          const nlohmann::json& context = nlohmann::json::object()) const;

  /// Instantiates `handles` in dependency order. Missing values come from
  /// `context` first, then from the info_describe of `live` components and of
  /// handles resolved earlier. Returns `live` followed by the new components
  /// in instantiation order.
  std::vector<std::shared_ptr<Component>> resolve(
      const std::vector<LazyHandle>& handles, const nlohmann::json& context,
      const std::vector<std::shared_ptr<Component>>& live = {}) const;

 private:
  std::map<std::pair<ComponentKind, std::string>, ComponentEntry> entries_;
};

nlohmann::json info_describe(const Component& c);

/// Resolves a relative dataset path against `data_dir`, else against the
/// SHILLBENCH_DATA_DIR environment variable, else the working directory.
std::filesystem::path resolve_data_path(const std::string& path,
                                        const std::optional<std::string>& data_dir);

}  // namespace shillbench
