// Experiment driver: run, ablate, score, gen-data.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mfsb/config.hpp"
#include "mfsb/error.hpp"
#include "mfsb/experiment.hpp"

namespace fs = std::filesystem;
using namespace mfsb;

namespace {

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct Common {
  std::string config_path;
  std::string out_dir;
  std::string format = "markdown";
  std::string world;
};

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : parse_config_file(c.config_path);
  if (!c.world.empty()) cfg.world = *parse_world_selection(c.world);
  cfg.validate();
  return cfg;
}

fs::path out_root(const Common& c) {
  if (!c.out_dir.empty()) return c.out_dir;
  if (const char* env = std::getenv("MFSB_OUT_DIR"); env && *env) return env;
  return "runs";
}

TableFormat format(const Common& c) { return *parse_table_format(c.format); }

std::vector<ResultsTable> tables_for(const std::string& method, const std::vector<EvalReport>& reports) {
  std::vector<ResultsTable> out;
  for (const auto& r : reports) {
    ResultsTable t{r.world, {}};
    t.add({method, r.seen_acc, r.unseen_acc, r.harmonic_mean, r.auc});
    out.push_back(std::move(t));
  }
  return out;
}

void print_tables(const std::vector<ResultsTable>& tables, TableFormat f) {
  for (std::size_t i = 0; i < tables.size(); ++i) {
    if (i > 0) std::cout << "\n";
    std::cout << emit_results_table(tables[i], f);
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) fail(ErrorKind::Io, "cannot write " + p.string());
}

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
  cmd->add_option("--config", c.config_path, "Experiment config (key = value); defaults when omitted")
      ->check(CLI::ExistingFile);
  if (with_out) cmd->add_option("--out", c.out_dir, "Output root (default $MFSB_OUT_DIR, else ./runs)");
  cmd->add_option("--format", c.format, "Table format")->check(CLI::IsMember({"csv", "markdown"}));
  cmd->add_option("--world", c.world, "Override eval.world")->check(CLI::IsMember({"open", "closed", "both"}));
}

int run(const Common& c) {
  const ExperimentConfig cfg = load(c);
  std::cerr << echo_config(cfg);
  const RunResult r = run_experiment(cfg, out_root(c), std::nullopt, &std::cerr);
  print_tables(tables_for(r.method, r.reports), format(c));
  std::cerr << "artifacts in " << r.dir.string() << "\n";
  return 0;
}

int ablate(const Common& c, const std::string& suite_name, std::size_t n_seeds) {
  const auto suite = parse_suite(suite_name);
  if (!suite) fail(ErrorKind::Config, "unknown suite '" + suite_name + "' (prompt_forms, components, fusion)");
  if (n_seeds == 0) fail(ErrorKind::Config, "--seeds must be at least 1");
  const ExperimentConfig base = load(c);
  std::cerr << echo_config(base);
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < n_seeds; ++i) seeds.push_back(base.seed + i);

  const fs::path root = out_root(c);
  const SuiteResult result = run_ablation_suite(*suite, base, seeds, root, &std::cerr);
  const std::string stem = "ablate_" + to_string(*suite);
  write_text(root / (stem + "_per_seed.csv"), per_seed_csv(result));
  for (const auto& t : result.tables) {
    write_text(root / (stem + "_" + to_string(t.world) + ".csv"), emit_results_table(t, TableFormat::Csv));
    write_text(root / (stem + "_" + to_string(t.world) + ".md"), emit_results_table(t, TableFormat::Markdown));
  }
  print_tables(result.tables, format(c));
  return 0;
}

int score(const Common& c, const std::string& checkpoint) {
  const ExperimentConfig cfg = load(c);
  const auto reports = score_checkpoint(cfg, checkpoint, cfg.world);
  print_tables(tables_for(method_label(cfg), reports), format(c));
  return 0;
}

int gen_data(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const Task task = build_task(cfg);
  const fs::path root = out_root(c);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + root.string() + ": " + ec.message());
  std::ofstream data(root / "dataset.tsv", std::ios::binary | std::ios::trunc);
  std::ofstream manifest(root / "manifest.tsv", std::ios::binary | std::ios::trunc);
  if (!data || !manifest) fail(ErrorKind::Io, "cannot write into " + root.string());
  write_dataset(data, task.data);
  write_manifest(manifest, task.space, task.split);
  if (!data || !manifest) fail(ErrorKind::Io, "failed writing dataset files in " + root.string());
  std::cerr << task.data.size() << " samples, " << task.split.seen.size() << " seen and "
            << task.split.unseen.size() << " unseen pairs written to " << root.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional zero-shot experiments with separated prompts and modal fusion"};
  app.require_subcommand(1);

  Common common;
  std::string suite, checkpoint;
  std::size_t seeds = 5;

  auto* run_cmd = app.add_subcommand("run", "Train and evaluate one configuration");
  add_common(run_cmd, common);
  auto* ablate_cmd = app.add_subcommand("ablate", "Run an ablation suite, averaging over seeds");
  add_common(ablate_cmd, common);
  ablate_cmd->add_option("--suite", suite, "prompt_forms, components or fusion")->required();
  ablate_cmd->add_option("--seeds", seeds, "Number of seeds, counted up from the config seed");
  auto* score_cmd = app.add_subcommand("score", "Re-evaluate a checkpoint on the test partition");
  add_common(score_cmd, common, false);
  score_cmd->add_option("--checkpoint", checkpoint, "checkpoint.bin of a run")->required()->check(CLI::ExistingFile);
  auto* gen_cmd = app.add_subcommand("gen-data", "Write the generated dataset and split manifest");
  add_common(gen_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*run_cmd) return run(common);
    if (*ablate_cmd) return ablate(common, suite, seeds);
    if (*score_cmd) return score(common, checkpoint);
    if (*gen_cmd) return gen_data(common);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return e.kind() == ErrorKind::Config ? kConfigError : kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kRuntimeError;
}
