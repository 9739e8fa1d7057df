// Command-line front end: run workflows, convert datasets, list components
// and compare reports.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "shillbench/dataset.hpp"
#include "shillbench/metrics.hpp"
#include "shillbench/registry.hpp"
#include "shillbench/workflow.hpp"

namespace sb = shillbench;

namespace {

constexpr int kFailure = 2;

void print_summary(const sb::WorkflowReport& r) {
  for (const auto& s : r.stages) {
    std::cout << s.name;
    if (s.attack_metrics) {
      for (std::size_t c = 0; c < s.attack_metrics->ks.size(); ++c) {
        std::cout << "  HR@" << s.attack_metrics->ks[c] << '=' << s.attack_metrics->mean_hr[c];
      }
    }
    for (const auto& [k, v] : s.held_out) std::cout << "  " << k << '=' << v;
    if (s.detection_metrics) {
      const auto& f = s.detection_metrics->fake_data;
      std::cout << "  fake P=" << f.precision << " R=" << f.recall << " F1=" << f.f1;
    }
    std::cout << '\n';
  }
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& out) {
  try {
    sb::WorkflowConfig config = sb::load_workflow_config(config_path);
    if (seed) config.seeds = {*seed, *seed, *seed, *seed};
    if (!out.empty()) config.output_dir = out;
    const sb::WorkflowReport report = sb::execute(config);
    print_summary(report);
    if (!config.output_dir.empty()) {
      std::cout << "report written to " << (std::filesystem::path(config.output_dir) / "report.json").string()
                << '\n';
    }
    return 0;
  } catch (const sb::WorkflowError& e) {
    std::cerr << "shillbench run: failed at " << e.what() << '\n';
    return kFailure;
  }
}

int cmd_convert(const std::string& input, const std::string& map, const std::string& output,
                const std::string& delimiter, bool no_header) {
  try {
    sb::CsvSchema schema = sb::CsvSchema::from_column_map(map);
    if (delimiter == "\\t" || delimiter == "tab") {
      schema.delimiter = "\t";
    } else if (!delimiter.empty()) {
      schema.delimiter = delimiter;
    }
    if (no_header) schema.has_header = false;
    std::filesystem::path in(input);
    if (!std::filesystem::exists(in)) in = sb::resolve_data_path(input, std::nullopt);
    const std::size_t rows = sb::convert_csv(in, schema, output);
    std::cout << "converted " << rows << " rows to " << output << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "shillbench data convert: failed at stage 'convert': " << e.what() << '\n';
    return kFailure;
  }
}

int cmd_list(const std::string& kind_name) {
  try {
    const auto kind = sb::parse_component_kind(kind_name);
    const auto& registry = sb::Registry::global();
    for (const auto& name : registry.list(kind)) {
      std::cout << name << ' ' << registry.defaults(kind, name).dump() << '\n';
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "shillbench list: " << e.what() << '\n';
    return kFailure;
  }
}

int cmd_compare(const std::string& a, const std::string& b) {
  try {
    const auto ra = sb::read_report(a);
    const auto rb = sb::read_report(b);
    std::cout << sb::render_deltas(sb::compare_runs(ra, rb));
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "shillbench report compare: failed at stage 'compare': " << e.what() << '\n';
    return kFailure;
  }
}

int cmd_stages(const std::string& run, const std::string& before, const std::string& after) {
  try {
    std::cout << sb::render_deltas(sb::compare_stages(sb::read_report(run), before, after));
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "shillbench report stages: failed at stage 'compare': " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shillbench: shilling attack and defense benchmark"};
  app.require_subcommand(1);
  int status = 0;

  auto* run = app.add_subcommand("run", "Execute a workflow config");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  run->add_option("--config", config_path, "Workflow config (JSON)")->required();
  run->add_option("--seed", seed, "Use this value for all four seeds");
  run->add_option("--out", out, "Output directory (overrides workflow.output_dir)");
  run->callback([&] { status = cmd_run(config_path, seed, out); });

  auto* data = app.add_subcommand("data", "Dataset utilities");
  data->require_subcommand(1);
  auto* convert = data->add_subcommand("convert", "Re-encode a foreign CSV into the canonical layout");
  std::string input, map, output, delimiter;
  bool no_header = false;
  convert->add_option("--input", input, "Source file")->required();
  convert->add_option("--map", map, "Column map, e.g. user_id=userId,item_id=movieId,rating=rating")
      ->required();
  convert->add_option("--out", output, "Destination CSV")->required();
  convert->add_option("--delimiter", delimiter, "Source field delimiter (default ','; \\t or tab for tabs)");
  convert->add_flag("--no-header", no_header, "Source has no header row; use #N column indices");
  convert->callback([&] { status = cmd_convert(input, map, output, delimiter, no_header); });

  auto* list = app.add_subcommand("list", "List registered components of a kind with defaults");
  std::string kind;
  list->add_option("kind", kind, "dataset, victim, attacker, defender or workflow")->required();
  list->callback([&] { status = cmd_list(kind); });

  auto* report = app.add_subcommand("report", "Report utilities");
  report->require_subcommand(1);
  auto* compare = report->add_subcommand("compare", "Per-stage HR@k deltas (B - A)");
  std::string run_a, run_b;
  compare->add_option("runA", run_a, "Run directory or report.json")->required();
  compare->add_option("runB", run_b, "Run directory or report.json")->required();
  compare->callback([&] { status = cmd_compare(run_a, run_b); });
  auto* stages = report->add_subcommand("stages", "HR@k deltas between two stages of one run");
  std::string one_run, before = "post_attack", after = "post_defense";
  stages->add_option("run", one_run, "Run directory or report.json")->required();
  stages->add_option("before", before, "Stage A (default post_attack)");
  stages->add_option("after", after, "Stage B (default post_defense)");
  stages->callback([&] { status = cmd_stages(one_run, before, after); });

  CLI11_PARSE(app, argc, argv);
  return status;
}
