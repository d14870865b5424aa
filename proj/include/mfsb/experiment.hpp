#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mfsb/config.hpp"
#include "mfsb/results_table.hpp"

namespace mfsb {

/// Space, split and samples for one config, all derived from its seed.
struct Task {
  CompositionSpace space;
  Split split;
  GeneratorSpec generator;
  Dataset data;
};
Task build_task(const ExperimentConfig& config);

/// "Hard {Pair}, Soft {Obj}, Soft {Attr}", active elements only.
std::string prompt_label(const ModelConfig& model);
/// Prompt label, element subset and fusion order in one line.
std::string method_label(const ExperimentConfig& config);

struct RunResult {
  std::filesystem::path dir;
  std::uint64_t hash = 0;
  std::string method;
  std::vector<EvalReport> reports;  // test partition, one per configured world
  TrainHistory history;
};

/// Generates the task, trains, evaluates on the test partition and writes
/// config.txt, loss.csv, report.csv and checkpoint.bin into
/// out_root/<config hash>. A directory holding a different config is never
/// overwritten. Progress goes to `log` when given.
RunResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_root,
                         const std::optional<std::string>& method = std::nullopt, std::ostream* log = nullptr);

/// Reloads a run directory's checkpoint and re-evaluates it.
std::vector<EvalReport> score_checkpoint(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                                         WorldSelection world);

enum class Suite { PromptForms, Components, Fusion };
std::optional<Suite> parse_suite(std::string_view text);
std::string to_string(Suite s);

struct SuiteCell {
  std::string label;
  ExperimentConfig config;
};
/// The row set of a suite: 27 prompt-form combinations, 7 element subsets
/// or 5 fusion orders, each a variation of `base`.
std::vector<SuiteCell> suite_cells(Suite suite, const ExperimentConfig& base);

struct SeedResult {
  std::string label;
  std::uint64_t seed;
  EvalReport report;
};

struct SuiteResult {
  std::vector<ResultsTable> tables;  // one per configured world, means over seeds
  std::vector<SeedResult> per_seed;
};

/// Runs every cell for each seed and averages S, U, HM and AUC over seeds.
SuiteResult run_ablation_suite(Suite suite, const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds,
                               const std::filesystem::path& out_root, std::ostream* log = nullptr);

/// `method,seed,world,S,U,HM,AUC` in shortest round-trip form.
std::string per_seed_csv(const SuiteResult& result);

}  // namespace mfsb
