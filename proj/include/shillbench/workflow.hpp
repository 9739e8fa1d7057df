#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "shillbench/metrics.hpp"
#include "shillbench/registry.hpp"

namespace shillbench {

inline constexpr const char* kVersion = "0.1.0";

/// Attack knowledge. Black box is part of the taxonomy but not implemented.
enum class Knowledge { kWhiteBox, kGrayBox, kBlackBox };

std::string to_string(Knowledge k);
Knowledge parse_knowledge(const std::string& s);

/// Budget as configured; unset fields take data-dependent defaults.
struct BudgetConfig {
  std::optional<std::size_t> n_fake_users;
  /// Alternative to n_fake_users: ceil(fraction * real users).
  std::optional<double> attack_fraction;
  std::optional<std::size_t> filler_size;
  std::optional<std::size_t> selected_size;
  /// Explicit target item ids. When empty, `n_targets` are sampled from the
  /// below-median-popularity training items.
  std::vector<std::string> target_items;
  std::size_t n_targets = 1;
};

struct Seeds {
  std::uint64_t data = 0;
  std::uint64_t attack = 0;
  std::uint64_t victim = 0;
  std::uint64_t defense = 0;

  std::map<std::string, std::uint64_t> as_map() const;
};

struct WorkflowConfig {
  ComponentSpec dataset;
  ComponentSpec victim;
  std::optional<ComponentSpec> attacker;
  std::optional<ComponentSpec> defender;
  Knowledge knowledge = Knowledge::kWhiteBox;
  double exposure = 1.0;
  std::vector<std::size_t> eval_ks = {10, 20, 50, 100};
  Seeds seeds;
  BudgetConfig budget;
  double split_fraction = 0.8;
  /// Share of training users sampled to build the labeled calibration set.
  double calibration_fraction = 0.2;
  /// Epochs without held-out improvement before training stops; 0 disables.
  std::size_t early_stop_patience = 5;
  std::string output_dir;

  /// Throws WorkflowError("config", ...) on an invalid combination.
  void validate() const;
  /// Merged snapshot with every default filled in.
  nlohmann::json to_json() const;
  static WorkflowConfig from_json(const nlohmann::json& j,
                                  const Registry& registry = Registry::global());
};

WorkflowConfig load_workflow_config(const std::filesystem::path& path,
                                    const Registry& registry = Registry::global());

class WorkflowError : public std::runtime_error {
 public:
  WorkflowError(std::string stage, const std::string& cause)
      : std::runtime_error("stage '" + stage + "': " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// ---------------------------------------------------------------------------
// Hooks

struct EpochEvent {
  std::string stage;
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  std::map<std::string, double> held_out;
};

/// Named callbacks at fixed points of a run. Epoch hooks return false to stop
/// training early.
class Hooks {
 public:
  using EpochHook = std::function<bool(const EpochEvent&)>;
  using StageHook = std::function<void(const StageReport&)>;
  using RunHook = std::function<void(const WorkflowReport&)>;

  void on_epoch(std::string name, EpochHook hook);
  void on_stage(std::string name, StageHook hook);
  void on_run(std::string name, RunHook hook);

  bool fire_epoch(const EpochEvent& e) const;
  void fire_stage(const StageReport& s) const;
  void fire_run(const WorkflowReport& r) const;

  std::vector<std::string> names() const;

 private:
  std::vector<std::pair<std::string, EpochHook>> epoch_;
  std::vector<std::pair<std::string, StageHook>> stage_;
  std::vector<std::pair<std::string, RunHook>> run_;
};

/// Stops a stage once the held-out metric (RMSE falling, else the first HR
/// rising) has not improved for `patience` epochs.
Hooks::EpochHook early_stop_hook(std::size_t patience);

// ---------------------------------------------------------------------------
// Execution

/// What the attacker was handed, checked against the exposed user sample.
struct LeakageAudit {
  std::size_t train_users = 0;
  std::size_t exposed_users = 0;
  std::size_t attacker_input_users = 0;
  std::size_t attacker_input_interactions = 0;
  /// Attacker-input interactions not belonging to an exposed user's true
  /// training profile. Zero unless exposure leaked.
  std::size_t foreign_interactions = 0;

  nlohmann::json to_json() const;
};

LeakageAudit audit_exposure(const Dataset& train, const std::vector<std::string>& exposed_ids,
                            const Dataset& attacker_input);

/// Re-expresses `d` over the user and item vocabulary of `vocab`; interactions
/// of users or items that `vocab` lacks are dropped.
Dataset align_to(const Dataset& d, const Dataset& vocab);

/// Below-median-popularity items of `train`, sampled with `seed`.
std::vector<Index> sample_targets(const Dataset& train, std::size_t n, std::uint64_t seed);

/// Budget defaults: ceil(1% real users) fakes, round(mean profile length)
/// fillers, max(1, filler/10) selected items.
AttackBudget resolve_budget(const BudgetConfig& config, const Dataset& train,
                            const std::vector<Index>& targets);

struct ExecuteOptions {
  const Registry* registry = nullptr;  // global registry when null
  /// Extra hooks; the early-stop hook is added from the config.
  Hooks hooks;
  /// Dataset root overriding SHILLBENCH_DATA_DIR.
  std::optional<std::string> data_dir;
};

/// Runs split, baseline training, exposure, attack, injection, defense,
/// retraining and evaluation. Writes the report when output_dir is set. On
/// failure a partial report is written and WorkflowError names the stage.
WorkflowReport execute(const WorkflowConfig& config, const ExecuteOptions& options = {});

}  // namespace shillbench
