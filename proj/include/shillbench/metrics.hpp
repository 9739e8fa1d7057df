#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shillbench/dataset.hpp"
#include "shillbench/detectors.hpp"
#include "shillbench/mf_model.hpp"

namespace shillbench {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Attack efficacy

struct TargetHitRatio {
  std::string item_id;
  /// Real users without a training interaction with the target.
  std::size_t pool_size = 0;
  /// One entry per k; empty when the pool is empty (undefined HR).
  std::vector<double> hr;
};

struct AttackMetrics {
  std::vector<std::size_t> ks;
  std::vector<TargetHitRatio> targets;
  /// Equal-weight mean over targets with a nonempty pool, one entry per k.
  std::vector<double> mean_hr;

  double at(std::size_t k) const;
  bool operator==(const AttackMetrics&) const = default;
};

/// HR@k of each target over its pool. A pool user hits when the target is in
/// rank_topk(u, k) with the user's training items excluded. Throws when every
/// pool is empty or `ks` is not strictly increasing.
AttackMetrics hit_ratio_at_k(const MFModel& model, const Dataset& train,
                             const std::vector<Index>& targets,
                             const std::vector<std::size_t>& ks);

void to_json(nlohmann::json& j, const AttackMetrics& m);
void from_json(const nlohmann::json& j, AttackMetrics& m);

// ---------------------------------------------------------------------------
// Detection quality

struct ClassMetrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  bool operator==(const ClassMetrics&) const = default;
};

/// One-vs-rest metrics for each class. A ratio with a zero denominator is 0.
struct DetectionMetrics {
  ClassMetrics true_data;
  ClassMetrics fake_data;

  bool operator==(const DetectionMetrics&) const = default;
};

DetectionMetrics detection_metrics(const std::vector<bool>& predicted_fake,
                                   const std::vector<bool>& truth_fake);
/// Matches users by id. Throws unless both sides cover the same user set.
DetectionMetrics detection_metrics(const DetectionResult& result, const Dataset& truth);

void to_json(nlohmann::json& j, const DetectionMetrics& m);
void from_json(const nlohmann::json& j, DetectionMetrics& m);

// ---------------------------------------------------------------------------
// Report

struct StageReport {
  std::string name;
  std::optional<AttackMetrics> attack_metrics;
  std::optional<DetectionMetrics> detection_metrics;
  /// Held-out accuracy from test_step, when a victim was evaluated.
  std::map<std::string, double> held_out;
  std::vector<double> epoch_losses;
  /// Stage-specific counts and audit values.
  nlohmann::json details = nlohmann::json::object();

  bool operator==(const StageReport&) const = default;
};

struct WorkflowReport {
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::uint64_t> seeds;
  nlohmann::json components = nlohmann::json::object();
  /// Protocol choices the run depended on (pool rule, target policy, ...).
  nlohmann::json protocol = nlohmann::json::object();
  std::vector<StageReport> stages;
  std::optional<DetectionResult> detection;
  std::string status = "complete";
  std::optional<std::string> failed_stage;
  std::optional<std::string> error;
  std::string log_path;
  /// Wall-clock seconds per stage. Kept out of report.json.
  std::map<std::string, double> timings;

  const StageReport* stage(const std::string& name) const;
  /// Equality of everything except timings.
  bool operator==(const WorkflowReport& other) const;
};

nlohmann::json report_document(const WorkflowReport& r);
WorkflowReport report_from_document(const nlohmann::json& j);

struct ReportFiles {
  std::filesystem::path report;
  std::filesystem::path timings;
  std::vector<std::filesystem::path> tables;
};

/// Writes report.json, timings.json and the CSV tables into `dir`.
ReportFiles write_report(const WorkflowReport& r, const std::filesystem::path& dir);
/// Reads report.json (and timings.json when present) from a run directory or
/// a direct path to the document.
WorkflowReport read_report(const std::filesystem::path& path);

struct DeltaRow {
  std::string stage;
  std::size_t k = 0;
  double hr_a = 0.0;
  double hr_b = 0.0;
  double delta = 0.0;  // b - a
};

/// Per-stage, per-k mean HR differences for stages present in both reports.
std::vector<DeltaRow> compare_runs(const WorkflowReport& a, const WorkflowReport& b);
/// Before/after comparison of two stages of one report.
std::vector<DeltaRow> compare_stages(const WorkflowReport& r, const std::string& before,
                                     const std::string& after);
std::string render_deltas(const std::vector<DeltaRow>& rows);

}  // namespace shillbench
