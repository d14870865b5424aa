#include "mfsb/experiment.hpp"
#include "test_support.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

using namespace mfsb;
using namespace mfsb::testing;

namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.n_states = 3;
  c.n_objects = 3;
  c.split.train_per_pair = 3;
  c.split.eval_per_pair = 2;
  c.model.d_in = 8;
  c.model.d = 8;
  c.model.prefix_length = 2;
  c.train.epochs = 2;
  c.train.batch = 8;
  c.train.n_points = 11;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("mfsb_test_" + name)) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("a run writes its four artifacts into a hash-named directory") {
  TempDir out("run_artifacts");
  const ExperimentConfig c = tiny();
  const RunResult r = run_experiment(c, out.path);
  CHECK(r.dir == out.path / hash_hex(config_hash(c)));
  std::set<std::string> files;
  for (const auto& entry : fs::directory_iterator(r.dir)) files.insert(entry.path().filename().string());
  CHECK(files == std::set<std::string>{"checkpoint.bin", "config.txt", "loss.csv", "report.csv"});
  CHECK(slurp(r.dir / "config.txt") == echo_config(c));
  CHECK(r.reports.size() == 2);

  const std::string report = slurp(r.dir / "report.csv");
  CHECK(report.rfind("method,world,S,U,HM,AUC\n", 0) == 0);
  CHECK(report.find(",open,") != std::string::npos);
  CHECK(report.find(",closed,") != std::string::npos);

  const std::string loss = slurp(r.dir / "loss.csv");
  CHECK(loss.rfind("step,pair.hard_soft_baseline,pair.hard,pair.inter,pair.intra,", 0) == 0);
  const auto lines = static_cast<std::size_t>(std::count(loss.begin(), loss.end(), '\n'));
  CHECK(lines == 1 + r.history.steps.size());
}

TEST_CASE("identical configs give byte-identical reports and checkpoints") {
  TempDir a("det_a"), b("det_b");
  const ExperimentConfig c = tiny();
  const RunResult ra = run_experiment(c, a.path);
  const RunResult rb = run_experiment(c, b.path);
  CHECK(slurp(ra.dir / "report.csv") == slurp(rb.dir / "report.csv"));
  CHECK(slurp(ra.dir / "checkpoint.bin") == slurp(rb.dir / "checkpoint.bin"));
  CHECK(slurp(ra.dir / "loss.csv") == slurp(rb.dir / "loss.csv"));
}

TEST_CASE("a directory holding a different config is never overwritten") {
  TempDir out("overwrite");
  const ExperimentConfig c = tiny();
  const RunResult r = run_experiment(c, out.path);
  const std::string before = slurp(r.dir / "report.csv");
  { std::ofstream(r.dir / "config.txt") << "seed = 99\n"; }
  CHECK_ERROR_KIND(run_experiment(c, out.path), ErrorKind::Io);
  CHECK(slurp(r.dir / "report.csv") == before);
}

TEST_CASE("scoring a checkpoint reproduces the run's report") {
  TempDir out("score");
  const ExperimentConfig c = tiny();
  const RunResult r = run_experiment(c, out.path);
  const auto again = score_checkpoint(c, r.dir / "checkpoint.bin", c.world);
  REQUIRE(again.size() == r.reports.size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i].auc == r.reports[i].auc);
    CHECK(again[i].harmonic_mean == r.reports[i].harmonic_mean);
  }
  ExperimentConfig other = c;
  other.model.weights.alpha = 0.3;
  CHECK_ERROR_KIND(score_checkpoint(other, r.dir / "checkpoint.bin", c.world), ErrorKind::Config);
}

TEST_CASE("suites enumerate the table rows") {
  const ExperimentConfig base;
  const auto forms = suite_cells(Suite::PromptForms, base);
  REQUIRE(forms.size() == 27);
  CHECK(forms.front().label == "Hard+Soft {Pair}, Hard {Obj}, Hard {Attr}");
  CHECK(forms.back().label == "Hard {Pair}, Hard+Soft {Obj}, Hard+Soft {Attr}");
  std::set<std::string> unique;
  for (const auto& c : forms) unique.insert(c.label);
  CHECK(unique.size() == 27);
  CHECK(unique.count("Hard {Pair}, Soft {Obj}, Soft {Attr}") == 1);
  CHECK(unique.count("Soft {Pair}, Hard+Soft {Obj}, Soft {Attr}") == 1);

  const auto comps = suite_cells(Suite::Components, base);
  std::vector<std::string> labels;
  for (const auto& c : comps) labels.push_back(c.label);
  CHECK(labels == std::vector<std::string>{"Pair", "Object", "State", "Object + State", "Pair + Object",
                                           "Pair + State", "Pair + State + Object"});
  CHECK(comps[1].config.model.active == std::array{false, false, true});

  const auto fusion = suite_cells(Suite::Fusion, base);
  labels.clear();
  for (const auto& c : fusion) labels.push_back(c.label);
  CHECK(labels == std::vector<std::string>{"No Fusion", "Intra-Fusion Only", "Inter-Fusion Only",
                                           "1. Intra 2. Inter", "1. Inter 2. Intra"});
  CHECK(parse_suite("components") == Suite::Components);
  CHECK_FALSE(parse_suite("everything").has_value());
}

TEST_CASE("an ablation averages each cell over seeds") {
  TempDir out("ablate");
  ExperimentConfig base = tiny();
  base.train.epochs = 1;
  base.world = WorldSelection::Open;
  const SuiteResult r = run_ablation_suite(Suite::Fusion, base, {3, 4}, out.path);
  REQUIRE(r.tables.size() == 1);
  REQUIRE(r.tables[0].rows.size() == 5);
  REQUIRE(r.per_seed.size() == 10);
  const double mean_auc = (r.per_seed[0].report.auc + r.per_seed[1].report.auc) / 2.0;
  CHECK(r.tables[0].rows[0].auc == mean_auc);
  CHECK(r.per_seed[0].label == "No Fusion");
  CHECK(r.per_seed[1].seed == 4);
  const std::string dump = per_seed_csv(r);
  CHECK(dump.rfind("method,seed,world,S,U,HM,AUC\nNo Fusion,3,open,", 0) == 0);
  CHECK_ERROR_KIND(run_ablation_suite(Suite::Fusion, base, {}, out.path), ErrorKind::Config);
}

TEST_CASE("labels name forms in pair, obj, attr order and skip inactive elements") {
  ModelConfig m;
  m.forms = {PromptForm::Soft, PromptForm::HardPlusSoft, PromptForm::Hard};
  CHECK(prompt_label(m) == "Soft {Pair}, Hard {Obj}, Hard+Soft {Attr}");
  m.active = {false, true, true};
  CHECK(prompt_label(m) == "Hard {Obj}, Hard+Soft {Attr}");
}
