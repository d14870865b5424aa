#include "mfsb/experiment.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

#include "mfsb/error.hpp"

namespace mfsb {

namespace fs = std::filesystem;

Task build_task(const ExperimentConfig& config) {
  config.validate();
  Task t;
  t.space = generate_space(config.n_states, config.n_objects, config.seed);
  t.split = make_split(t.space, config.split, config.seed);
  t.generator = build_generator(t.space, config.model.d_in, config.seed);
  t.data = materialize_dataset(t.space, t.split, t.generator, config.noise_sigma, config.seed);
  return t;
}

namespace {

std::string element_title(Element e) {
  switch (e) {
    case Element::Pair: return "Pair";
    case Element::Attr: return "Attr";
    case Element::Obj: return "Obj";
  }
  return "?";
}

constexpr std::array<Element, 3> kLabelOrder{Element::Pair, Element::Obj, Element::Attr};

std::string shortest(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) fail(ErrorKind::Io, "cannot write " + p.string());
}

TrainOptions train_options(const ExperimentConfig& config) {
  TrainOptions o = config.train;
  o.validation_world = worlds(config.world).front();
  o.validate_each_epoch = true;
  return o;
}

}  // namespace

std::string prompt_label(const ModelConfig& model) {
  std::string out;
  for (Element e : kLabelOrder) {
    if (!model.is_active(e)) continue;
    if (!out.empty()) out += ", ";
    out += display_name(model.form(e)) + " {" + element_title(e) + "}";
  }
  return out;
}

std::string method_label(const ExperimentConfig& config) {
  return prompt_label(config.model) + " / " + display_name(config.model.fusion.order);
}

RunResult run_experiment(const ExperimentConfig& config, const fs::path& out_root,
                         const std::optional<std::string>& method, std::ostream* log) {
  config.validate();
  RunResult result;
  result.hash = config_hash(config);
  result.method = method.value_or(method_label(config));
  result.dir = out_root / hash_hex(result.hash);
  const std::string echo = echo_config(config);

  std::error_code ec;
  fs::create_directories(result.dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create run directory " + result.dir.string() + ": " + ec.message());
  const fs::path config_path = result.dir / "config.txt";
  if (fs::exists(config_path) && read_file(config_path) != echo) {
    fail(ErrorKind::Io, "run directory " + result.dir.string() + " holds a different config; refusing to overwrite");
  }
  write_file(config_path, echo);

  if (log) *log << "[" << hash_hex(result.hash) << "] " << result.method << " seed " << config.seed << "\n";
  const Task task = build_task(config);
  CzslModel model(task.space, config.model, config.seed);
  result.history = fit(model, task.space, task.split, task.data, train_options(config), config.seed, result.hash,
                       result.dir / "checkpoint.bin");

  std::ostringstream loss;
  const auto trace = config.model.fusion.stages();
  write_loss_csv_header(loss, loss_term_names(config.model.forms, config.model.active, trace));
  for (std::size_t i = 0; i < result.history.steps.size(); ++i) {
    LossBreakdown b;
    b.terms = result.history.steps[i].terms;
    b.total = result.history.steps[i].total;
    write_loss_csv_row(loss, i + 1, b);
  }
  write_file(result.dir / "loss.csv", loss.str());

  std::ostringstream report;
  write_report_csv_header(report);
  for (World w : worlds(config.world)) {
    EvalReport r = evaluate(model, task.space, task.split, task.data, Partition::Test, w, config.train.n_points);
    write_report_csv_row(report, result.method, r);
    if (log) {
      *log << "  test " << to_string(w) << ": S " << format_percent(r.seen_acc) << " U "
           << format_percent(r.unseen_acc) << " HM " << format_percent(r.harmonic_mean) << " AUC "
           << format_percent(r.auc) << "\n";
    }
    result.reports.push_back(std::move(r));
  }
  write_file(result.dir / "report.csv", report.str());
  return result;
}

std::vector<EvalReport> score_checkpoint(const ExperimentConfig& config, const fs::path& checkpoint,
                                         WorldSelection world) {
  const Task task = build_task(config);
  CzslModel model(task.space, config.model, config.seed);
  load_checkpoint(model, checkpoint, config_hash(config));
  std::vector<EvalReport> out;
  for (World w : worlds(world)) {
    out.push_back(evaluate(model, task.space, task.split, task.data, Partition::Test, w, config.train.n_points));
  }
  return out;
}

std::optional<Suite> parse_suite(std::string_view text) {
  if (text == "prompt_forms") return Suite::PromptForms;
  if (text == "components") return Suite::Components;
  if (text == "fusion") return Suite::Fusion;
  return std::nullopt;
}

std::string to_string(Suite s) {
  switch (s) {
    case Suite::PromptForms: return "prompt_forms";
    case Suite::Components: return "components";
    case Suite::Fusion: return "fusion";
  }
  return "?";
}

std::vector<SuiteCell> suite_cells(Suite suite, const ExperimentConfig& base) {
  std::vector<SuiteCell> cells;
  switch (suite) {
    case Suite::PromptForms: {
      const std::array<PromptForm, 3> pair_forms{PromptForm::HardPlusSoft, PromptForm::Soft, PromptForm::Hard};
      const std::array<PromptForm, 3> prim_forms{PromptForm::Hard, PromptForm::Soft, PromptForm::HardPlusSoft};
      for (PromptForm p : pair_forms)
        for (PromptForm o : prim_forms)
          for (PromptForm a : prim_forms) {
            ExperimentConfig c = base;
            c.model.active = {true, true, true};
            c.model.forms = {p, a, o};
            cells.push_back({prompt_label(c.model), c});
          }
      break;
    }
    case Suite::Components: {
      const std::array<std::pair<const char*, std::array<bool, 3>>, 7> subsets{{
          {"Pair", {true, false, false}},
          {"Object", {false, false, true}},
          {"State", {false, true, false}},
          {"Object + State", {false, true, true}},
          {"Pair + Object", {true, false, true}},
          {"Pair + State", {true, true, false}},
          {"Pair + State + Object", {true, true, true}},
      }};
      for (const auto& [label, active] : subsets) {
        ExperimentConfig c = base;
        c.model.active = active;
        cells.push_back({label, c});
      }
      break;
    }
    case Suite::Fusion:
      for (FusionOrder o : {FusionOrder::NoFusion, FusionOrder::IntraOnly, FusionOrder::InterOnly,
                            FusionOrder::IntraThenInter, FusionOrder::InterThenIntra}) {
        ExperimentConfig c = base;
        c.model.fusion.order = o;
        cells.push_back({display_name(o), c});
      }
      break;
  }
  return cells;
}

SuiteResult run_ablation_suite(Suite suite, const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds,
                               const fs::path& out_root, std::ostream* log) {
  if (seeds.empty()) fail(ErrorKind::Config, "an ablation needs at least one seed");
  const auto cells = suite_cells(suite, base);
  const auto ws = worlds(base.world);
  SuiteResult result;
  for (World w : ws) result.tables.push_back(ResultsTable{w, {}});
  for (const auto& cell : cells) {
    std::vector<ResultRow> sums(ws.size(), ResultRow{cell.label});
    for (std::uint64_t seed : seeds) {
      ExperimentConfig c = cell.config;
      c.seed = seed;
      const RunResult run = run_experiment(c, out_root, cell.label, log);
      for (std::size_t k = 0; k < ws.size(); ++k) {
        const EvalReport& r = run.reports[k];
        sums[k].seen += r.seen_acc;
        sums[k].unseen += r.unseen_acc;
        sums[k].hm += r.harmonic_mean;
        sums[k].auc += r.auc;
        result.per_seed.push_back({cell.label, seed, r});
      }
    }
    const double n = static_cast<double>(seeds.size());
    for (std::size_t k = 0; k < ws.size(); ++k) {
      ResultRow mean{cell.label, sums[k].seen / n, sums[k].unseen / n, sums[k].hm / n, sums[k].auc / n};
      result.tables[k].add(mean);
    }
  }
  return result;
}

std::string per_seed_csv(const SuiteResult& result) {
  std::ostringstream out;
  out << "method,seed,world,S,U,HM,AUC\n";
  for (const auto& s : result.per_seed) {
    out << csv_field(s.label) << ',' << s.seed << ',' << to_string(s.report.world) << ','
        << shortest(s.report.seen_acc) << ',' << shortest(s.report.unseen_acc) << ','
        << shortest(s.report.harmonic_mean) << ',' << shortest(s.report.auc) << '\n';
  }
  return out.str();
}

}  // namespace mfsb
